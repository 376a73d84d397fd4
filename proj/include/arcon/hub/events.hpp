#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "arcon/agents/command.hpp"

namespace arcon::hub {

/// Matches on the event's device, or on the source device of a transfer.
inline bool event_matches(const Event& e, const std::optional<std::string>& device) {
  if (!device) return true;
  if (e.device_id == *device) return true;
  const auto it = e.payload.find("src");
  return it != e.payload.end() && it->is_string() && *it == *device;
}

/// Bounded per-subscriber queue. When full the oldest event is dropped and
/// counted, so publishers never block.
class Subscription {
 public:
  Subscription(std::optional<std::string> filter, std::size_t capacity)
      : filter_(std::move(filter)), capacity_(capacity) {}

  std::optional<Event> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; })) return std::nullopt;
    if (queue_.empty()) return std::nullopt;
    Event e = std::move(queue_.front());
    queue_.pop_front();
    return e;
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    return dropped_;
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  const std::optional<std::string>& filter() const { return filter_; }

 private:
  friend class EventBus;

  void push(const Event& e) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      if (queue_.size() >= capacity_) {
        queue_.pop_front();
        ++dropped_;
      }
      queue_.push_back(e);
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::optional<std::string> filter_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Event> queue_;
  std::uint64_t dropped_ = 0;
  bool closed_ = false;
};

/// Hub-wide event stream. Every event gets a global, strictly increasing
/// seq; a bounded history ring lets late subscribers replay from a seq.
class EventBus {
 public:
  explicit EventBus(std::size_t history = 4096, std::size_t queue_capacity = 1024)
      : history_cap_(history), queue_cap_(queue_capacity) {}

  Event publish(Event e) {
    std::lock_guard lock(mutex_);
    e.seq = ++seq_;
    if (e.at == 0.0) e.at = unix_now();
    history_.push_back(e);
    if (history_.size() > history_cap_) history_.pop_front();
    for (auto it = subs_.begin(); it != subs_.end();) {
      if (auto s = it->lock()) {
        if (event_matches(e, s->filter())) s->push(e);
        ++it;
      } else {
        it = subs_.erase(it);
      }
    }
    return e;
  }

  /// New subscriber. Buffered history with seq > since is queued first.
  std::shared_ptr<Subscription> subscribe(std::optional<std::string> filter,
                                          std::optional<std::uint64_t> since = std::nullopt) {
    auto sub = std::make_shared<Subscription>(std::move(filter), queue_cap_);
    std::lock_guard lock(mutex_);
    if (since) {
      for (const auto& e : history_) {
        if (e.seq > *since && event_matches(e, sub->filter())) sub->push(e);
      }
    }
    subs_.push_back(sub);
    return sub;
  }

  std::vector<Event> history(const std::optional<std::string>& filter, std::uint64_t since = 0) const {
    std::lock_guard lock(mutex_);
    std::vector<Event> out;
    for (const auto& e : history_) {
      if (e.seq > since && event_matches(e, filter)) out.push_back(e);
    }
    return out;
  }

  std::uint64_t last_seq() const {
    std::lock_guard lock(mutex_);
    return seq_;
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(mutex_);
    std::uint64_t n = 0;
    for (const auto& w : subs_) {
      if (auto s = w.lock()) n += s->dropped();
    }
    return n;
  }

  /// Wakes and closes every subscriber (hub shutdown).
  void close_all() {
    std::lock_guard lock(mutex_);
    for (const auto& w : subs_) {
      if (auto s = w.lock()) s->close();
    }
    subs_.clear();
  }

 private:
  std::size_t history_cap_;
  std::size_t queue_cap_;
  mutable std::mutex mutex_;
  std::uint64_t seq_ = 0;
  std::deque<Event> history_;
  std::vector<std::weak_ptr<Subscription>> subs_;
};

}  // namespace arcon::hub
