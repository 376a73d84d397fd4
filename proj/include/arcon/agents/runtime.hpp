#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "arcon/agents/apply.hpp"
#include "arcon/core/log.hpp"
#include "arcon/pairnet/session.hpp"
#include "arcon/pairnet/socket.hpp"

namespace arcon::agents {

struct AgentConfig {
  DeviceKind kind = DeviceKind::Speaker;
  std::string address;
  pairnet::HostPort hub{"127.0.0.1", 7421};
  pairnet::Position position;
  DeviceState initial_state;
  TelemetrySchedule telemetry;
  bool reconnect = false;  // keep redialing the hub after a disconnect
};

/// {"kind","address","hub":"host:port","position":{"x_m","y_m"},
///  "initial_state":{...},"telemetry":{"interval_s","schedule":[...]}}
inline AgentConfig agent_config_from_json(const Json& j) {
  try {
    AgentConfig c;
    c.kind = parse_device_kind(j.at("kind").get<std::string>());
    c.address = j.at("address").get<std::string>();
    if (c.address.empty()) throw Error(ErrorKind::ConfigInvalid, "address must be non-empty");
    if (j.contains("hub")) c.hub = pairnet::parse_host_port(j["hub"].get<std::string>());
    if (j.contains("position")) c.position = {j["position"].value("x_m", 0.0), j["position"].value("y_m", 0.0)};
    c.initial_state = default_state(c.kind);
    if (j.contains("initial_state")) {
      // Fields not mentioned keep the kind's defaults.
      Json merged = to_json(c.initial_state);
      merged.update(j["initial_state"]);
      c.initial_state = state_from_json(merged);
    }
    c.telemetry = schedule_from_json(j.value("telemetry", Json()));
    return c;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInvalid) throw;
    throw Error(ErrorKind::ConfigInvalid, e.message());
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
}

/// One virtual slave device speaking the pairnet protocol to a hub.
class AgentRuntime {
 public:
  explicit AgentRuntime(AgentConfig cfg) : cfg_(std::move(cfg)), state_(cfg_.initial_state) {}
  AgentRuntime(const AgentRuntime&) = delete;
  AgentRuntime& operator=(const AgentRuntime&) = delete;
  ~AgentRuntime() { stop(); }

  const AgentConfig& config() const { return cfg_; }

  /// Dials the hub and says HELLO. Throws TransportFailure if the hub is not
  /// listening and reconnect is off.
  void start() {
    started_at_ = mono_now();
    stopping_ = false;
    if (!cfg_.reconnect) connect_once();
    reader_ = std::thread([this] { run(); });
    telemetry_ = std::thread([this] { telemetry_loop(); });
  }

  /// Orderly shutdown: BYE if paired, then close.
  void stop() {
    {
      std::lock_guard lock(mutex_);
      if (stopping_ && !reader_.joinable()) return;
      stopping_ = true;
      if (stream_ && paired_ && !silent_) {
        try {
          stream_->send({pairnet::MsgType::BYE, ++seq_, Json{{"reason", "shutdown"}}});
        } catch (const Error&) {
        }
      }
      if (stream_) stream_->shutdown();
    }
    cv_.notify_all();
    if (reader_.joinable()) reader_.join();
    if (telemetry_.joinable()) telemetry_.join();
  }

  /// Abrupt death: the socket closes without BYE.
  void kill() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
      if (stream_) stream_->shutdown();
    }
    cv_.notify_all();
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
    if (telemetry_.joinable()) telemetry_.join();
  }

  /// Fault injection: a silent agent reads but never answers.
  void set_silent(bool silent) {
    std::lock_guard lock(mutex_);
    silent_ = silent;
  }

  /// Fault injection: die (without replying) when ReceiveChunk `index` arrives.
  void kill_on_chunk(int index) {
    std::lock_guard lock(mutex_);
    kill_on_chunk_ = index;
  }

  DeviceState state() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

  bool paired() const {
    std::lock_guard lock(mutex_);
    return paired_;
  }

  bool connected() const {
    std::lock_guard lock(mutex_);
    return connected_;
  }

  /// CMD envelopes received so far, answered or not.
  std::size_t commands_seen() const {
    std::lock_guard lock(mutex_);
    return commands_seen_;
  }

  std::optional<std::string> last_reject() const {
    std::lock_guard lock(mutex_);
    return last_reject_;
  }

  /// Blocks until paired, rejected or the timeout passes.
  bool wait_paired(double timeout_s) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] { return paired_; });
  }

  bool wait_rejected(double timeout_s) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] { return last_reject_.has_value(); });
  }

  bool wait_unpaired(double timeout_s) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] { return !paired_; });
  }

 private:
  void connect_once() {
    auto s = std::make_shared<pairnet::FramedStream>(pairnet::TcpStream::connect(cfg_.hub));
    std::lock_guard lock(mutex_);
    stream_ = s;
    connected_ = true;
    stream_->send({pairnet::MsgType::HELLO, ++seq_,
                   Json{{"address", cfg_.address},
                        {"kind", std::string(to_string(cfg_.kind))},
                        {"x_m", cfg_.position.x},
                        {"y_m", cfg_.position.y}}});
  }

  void run() {
    for (;;) {
      std::shared_ptr<pairnet::FramedStream> s;
      {
        std::lock_guard lock(mutex_);
        if (stopping_) break;
        s = stream_;
      }
      if (!s) {
        try {
          connect_once();
          logger()->info("agent={} event=connected hub={}", cfg_.address, cfg_.hub.str());
          continue;
        } catch (const Error& e) {
          logger()->debug("agent={} event=dial_failed error={}", cfg_.address, e.message());
          std::unique_lock lock(mutex_);
          cv_.wait_for(lock, std::chrono::seconds(1), [&] { return stopping_.load(); });
          continue;
        }
      }
      try {
        while (auto env = s->receive()) handle(*s, *env);
      } catch (const Error& e) {
        logger()->warn("agent={} event=link_error error={} message=\"{}\"", cfg_.address, to_string(e.kind()),
                       e.message());
      }
      {
        std::lock_guard lock(mutex_);
        paired_ = false;
        connected_ = false;
        stream_.reset();
        if (!cfg_.reconnect) stopping_ = true;
      }
      cv_.notify_all();
      if (!cfg_.reconnect) break;
    }
  }

  void handle(pairnet::FramedStream& s, const pairnet::Envelope& env) {
    using pairnet::MsgType;
    std::unique_lock lock(mutex_);
    if (silent_) {
      if (env.t == MsgType::CMD) ++commands_seen_;
      return;
    }
    switch (env.t) {
      case MsgType::PAIR_REQUEST:
        paired_ = true;
        session_id_ = env.body.value("session_id", "");
        last_reject_.reset();
        s.send({MsgType::PAIR_ACCEPT, ++seq_, Json{{"session_id", session_id_}, {"state", to_json(state_)}}});
        logger()->info("agent={} event=paired session={}", cfg_.address, session_id_);
        lock.unlock();
        cv_.notify_all();
        break;
      case MsgType::PAIR_REJECT:
        last_reject_ = env.body.value("reason", "unknown");
        logger()->warn("agent={} event=pair_rejected reason={}", cfg_.address, *last_reject_);
        lock.unlock();
        cv_.notify_all();
        break;
      case MsgType::BYE:
        paired_ = false;
        logger()->info("agent={} event=unpaired reason={}", cfg_.address, env.body.value("reason", ""));
        lock.unlock();
        cv_.notify_all();
        break;
      case MsgType::PING:
        s.send({MsgType::PONG, env.seq, Json::object()});
        break;
      case MsgType::CMD:
        ++commands_seen_;
        handle_command(s, env);
        break;
      default:
        break;
    }
  }

  // Called with mutex_ held so command application and telemetry serialize.
  void handle_command(pairnet::FramedStream& s, const pairnet::Envelope& env) {
    Json result;
    try {
      if (!paired_) throw Error(ErrorKind::NotPaired, "agent has no active session");
      const Command c = command_from_json(env.body.at("command"));
      if (const auto* chunk = std::get_if<cmd::ReceiveChunk>(&c); chunk && chunk->index == kill_on_chunk_) {
        logger()->warn("agent={} event=fault_kill chunk={}", cfg_.address, chunk->index);
        stopping_ = true;
        s.shutdown();
        return;
      }
      Outcome out = apply(cfg_.kind, state_, c);
      state_ = out.state;
      Json events = Json::array();
      for (auto& e : out.events) {
        e.at = unix_now();
        events.push_back({{"kind", std::string(to_string(e.kind))}, {"payload", e.payload}, {"at", e.at}});
      }
      result = Json{{"ok", true}, {"state", to_json(state_)}, {"events", events}};
    } catch (const Error& e) {
      result = e.to_json();
      result["ok"] = false;
    } catch (const Json::exception& e) {
      result = Json{{"ok", false}, {"error", "InvalidArgument"}, {"message", e.what()}};
    }
    s.send({pairnet::MsgType::CMD_RESULT, env.seq, result});
  }

  void telemetry_loop() {
    int tick = 0;
    std::unique_lock lock(mutex_);
    while (!stopping_) {
      const double next = started_at_ + cfg_.telemetry.interval_s * (tick + 1);
      const auto wait = std::chrono::duration<double>(std::max(0.0, next - mono_now()));
      if (cv_.wait_for(lock, wait, [&] { return stopping_.load(); })) break;
      ++tick;
      if (!paired_ || silent_ || !stream_) continue;
      Outcome out = telemetry_tick(state_, cfg_.telemetry, mono_now() - started_at_);
      state_ = out.state;
      for (const auto& e : out.events) {
        try {
          stream_->send({pairnet::MsgType::EVENT, ++seq_,
                         Json{{"kind", std::string(to_string(e.kind))}, {"payload", e.payload}, {"at", unix_now()}}});
        } catch (const Error&) {
          break;
        }
      }
    }
  }

  AgentConfig cfg_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  DeviceState state_;
  std::shared_ptr<pairnet::FramedStream> stream_;
  std::thread reader_;
  std::thread telemetry_;
  std::atomic<bool> stopping_{false};
  bool connected_ = false;
  bool paired_ = false;
  bool silent_ = false;
  int kill_on_chunk_ = -1;
  std::size_t commands_seen_ = 0;
  std::string session_id_;
  std::optional<std::string> last_reject_;
  std::uint64_t seq_ = 0;
  double started_at_ = 0.0;
};

}  // namespace arcon::agents
