#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "arcon/agents/command.hpp"
#include "arcon/core/log.hpp"
#include "arcon/hub/config.hpp"
#include "arcon/hub/events.hpp"
#include "arcon/pairnet/session.hpp"
#include "arcon/pairnet/socket.hpp"
#include "arcon/recognizer/scan.hpp"
#include "arcon/registry/registry.hpp"

namespace arcon::hub {

using registry::DeviceRecord;
using registry::Registration;

enum class TransferState { Running, Done, Failed };

inline std::string_view to_string(TransferState s) {
  switch (s) {
    case TransferState::Running: return "Running";
    case TransferState::Done: return "Done";
    case TransferState::Failed: return "Failed";
  }
  return "Failed";
}

struct TransferJob {
  std::string job_id;
  std::string src_device_id;
  std::string dst_device_id;
  std::string label;
  std::int64_t total_bytes = 0;
  std::int64_t sent_bytes = 0;
  int chunk_bytes = 256;
  TransferState state = TransferState::Running;
  std::optional<std::string> error;
};

inline Json to_json(const TransferJob& j) {
  Json out{{"job_id", j.job_id},
           {"src", j.src_device_id},
           {"dst", j.dst_device_id},
           {"label", j.label},
           {"total_bytes", j.total_bytes},
           {"sent_bytes", j.sent_bytes},
           {"chunk_bytes", j.chunk_bytes},
           {"state", std::string(to_string(j.state))}};
  if (j.error) out["error"] = *j.error;
  return out;
}

/// Immutable snapshot served to the console. Recognitions come from the
/// latest completed scan; everything else is last-known hub state.
struct ViewModel {
  std::uint64_t epoch = 0;
  std::optional<std::string> frame_id;
  std::vector<recognizer::Recognition> recognitions;
  std::map<std::string, DeviceState> device_states;
  std::map<std::string, std::string> sessions;
  std::vector<TransferJob> active_transfers;
};

inline Json to_json(const ViewModel& v) {
  Json recs = Json::array();
  for (const auto& r : v.recognitions) recs.push_back(recognizer::to_json(r));
  Json states = Json::object();
  for (const auto& [id, s] : v.device_states) states[id] = to_json(s);
  Json transfers = Json::array();
  for (const auto& t : v.active_transfers) transfers.push_back(to_json(t));
  return Json{{"epoch", v.epoch},
              {"frame_id", v.frame_id ? Json(*v.frame_id) : Json(nullptr)},
              {"recognitions", recs},
              {"device_states", states},
              {"sessions", v.sessions},
              {"active_transfers", transfers}};
}

struct CommandResult {
  std::string device_id;
  DeviceState state;
  std::vector<Event> events;
};

inline Json to_json(const CommandResult& r) {
  Json events = Json::array();
  for (const auto& e : r.events) {
    events.push_back({{"kind", std::string(to_string(e.kind))}, {"payload", e.payload}, {"at", e.at}});
  }
  return Json{{"ok", true}, {"device_id", r.device_id}, {"state", to_json(r.state)}, {"events", events}};
}

/// Master side of one agent connection.
struct Link {
  std::string address;
  DeviceKind kind = DeviceKind::Generic;
  std::shared_ptr<pairnet::FramedStream> stream;
  std::thread reader;
  std::atomic<bool> finished{false};

  std::mutex mu;
  bool connected = true;
  std::optional<pairnet::PairingSession> session;
  std::string device_id;
  double pairing_started = 0.0;
  std::uint64_t next_seq = 0;
  std::optional<std::string> last_reject;
  std::map<std::uint64_t, std::shared_ptr<std::promise<Json>>> pending;

  // Caller holds mu.
  void fail_pending(const Error& err) {
    for (auto& [_, p] : pending) p->set_exception(std::make_exception_ptr(err));
    pending.clear();
  }
};

class Hub {
 public:
  /// Loads the registry and topology. Nothing listens until start().
  explicit Hub(HubConfig cfg) : cfg_(std::move(cfg)), network_(cfg_.net) {
    cfg_.validate();
    try {
      registry_ = registry::Registry::load(cfg_.registry_path, cfg_.detail_threshold);
    } catch (const Error& e) {
      throw Error(ErrorKind::RegistryLoadFailure,
                  "cannot load registry " + cfg_.registry_path.string() + ": " + e.message(),
                  Json{{"path", cfg_.registry_path.string()}, {"cause", std::string(arcon::to_string(e.kind()))}});
    }
    if (cfg_.topology_path) {
      try {
        network_.load_topology(Json::parse(read_file_bytes(*cfg_.topology_path)));
      } catch (const std::exception& e) {
        throw Error(ErrorKind::ConfigInvalid, std::string("bad topology: ") + e.what());
      }
    }
    network_.add_endpoint({cfg_.master_address, cfg_.master_position, pairnet::Role::Master});
    load_frame_list();
  }

  Hub(const Hub&) = delete;
  Hub& operator=(const Hub&) = delete;
  ~Hub() { stop(); }

  const HubConfig& config() const { return cfg_; }
  EventBus& events() { return bus_; }

  /// Binds the pairnet listener and starts the background threads.
  void start() {
    listener_ = pairnet::TcpListener::bind(pairnet::parse_host_port(cfg_.pairnet_listen));
    running_ = true;
    {
      auto v = std::make_shared<ViewModel>();
      if (!frames_.empty()) v->frame_id = frames_.front().filename().string();
      std::lock_guard lock(view_mu_);
      view_ = v;
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
    heartbeat_thread_ = std::thread([this] { heartbeat_loop(); });
    scan_thread_ = std::thread([this] { scan_loop(); });
    logger()->info("hub event=started pairnet_port={} devices={}", listener_.port(), registry_.size());
  }

  void stop() {
    if (!running_.exchange(false)) return;
    { std::lock_guard lock(wake_mu_); }
    wake_.notify_all();
    if (accept_thread_.joinable()) accept_thread_.join();
    listener_.close();
    if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
    if (scan_thread_.joinable()) scan_thread_.join();
    std::vector<std::shared_ptr<Link>> links;
    {
      std::lock_guard lock(links_mu_);
      links = all_links_;
    }
    for (auto& l : links) {
      {
        std::lock_guard lock(l->mu);
        if (l->session && l->session->active()) {
          try {
            l->stream->send({pairnet::MsgType::BYE, ++l->next_seq, Json{{"reason", "shutdown"}}});
          } catch (const Error&) {
          }
        }
      }
      l->stream->shutdown();
    }
    for (auto& l : links) {
      if (l->reader.joinable()) l->reader.join();
    }
    std::vector<std::thread> transfers;
    {
      std::lock_guard lock(jobs_mu_);
      transfers.swap(transfer_threads_);
    }
    for (auto& t : transfers) t.join();
    bus_.close_all();
    logger()->info("hub event=stopped");
  }

  int pairnet_port() const { return listener_.port(); }

  // -------------------------------------------------------------------------
  // Registry

  DeviceRecord register_device(const Registration& req) {
    DeviceRecord rec = registry_.register_device(req);
    try {
      registry_.persist(cfg_.registry_path);
    } catch (const Error&) {
      registry_.remove_device(rec.device_id);
      throw;
    }
    ++registry_version_;
    logger()->info("hub event=registered device={} address={} images={}", rec.device_id, rec.address,
                   rec.signatures.size());
    if (auto link = link_for(rec.address)) try_pair(link);
    return rec;
  }

  std::vector<DeviceRecord> list_devices() const { return registry_.list_devices(); }
  DeviceRecord get_device(const std::string& id) const { return registry_.get_device(id); }

  DeviceRecord remove_device(const std::string& id) {
    DeviceRecord rec = registry_.remove_device(id);
    registry_.persist(cfg_.registry_path);
    ++registry_version_;
    if (auto link = link_for(rec.address)) {
      std::vector<Event> lost;
      {
        std::lock_guard lock(link->mu);
        close_session(*link, "removed", true, lost);
      }
      for (auto& e : lost) bus_.publish(std::move(e));
    }
    {
      std::lock_guard lock(state_mu_);
      device_states_.erase(id);
    }
    logger()->info("hub event=removed device={}", id);
    refresh_view();
    return rec;
  }

  // -------------------------------------------------------------------------
  // Commands

  /// Routes a command through the device's Active session. NotPaired is
  /// raised before anything is written to the wire.
  CommandResult dispatch(const std::string& device_id, const Command& c) {
    const DeviceRecord rec = registry_.get_device(device_id);
    auto link = require_paired(rec);
    const Json body = send_command(*link, arcon::to_json(c));
    CommandResult out;
    out.device_id = device_id;
    out.state = state_from_json(body.at("state"));
    for (const auto& ej : body.value("events", Json::array())) {
      Event e = event_from_json(ej);
      e.device_id = device_id;
      out.events.push_back(std::move(e));
    }
    refresh_view();
    return out;
  }

  DeviceState snapshot(const std::string& device_id) { return dispatch(device_id, cmd::GetStatus{}).state; }

  TransferJob start_transfer(const std::string& src, const std::string& dst, const std::string& label,
                             std::int64_t total_bytes) {
    if (total_bytes < 1) throw Error(ErrorKind::InvalidArgument, "total_bytes must be >= 1");
    if (src == dst) throw Error(ErrorKind::SelfTransfer, "source and destination are the same device");
    const DeviceRecord src_rec = registry_.get_device(src);
    const DeviceRecord dst_rec = registry_.get_device(dst);
    require_paired(src_rec);
    auto dst_link = require_paired(dst_rec);

    TransferJob job;
    job.job_id = new_uuid();
    job.src_device_id = src;
    job.dst_device_id = dst;
    job.label = label;
    job.total_bytes = total_bytes;
    job.chunk_bytes = cfg_.chunk_bytes;
    {
      std::lock_guard lock(jobs_mu_);
      jobs_[job.job_id] = job;
      transfer_threads_.emplace_back([this, job, dst_link] { run_transfer(job, dst_link); });
    }
    logger()->info("hub event=transfer_started job={} src={} dst={} bytes={}", job.job_id, src, dst, total_bytes);
    return job;
  }

  std::optional<TransferJob> find_transfer(const std::string& job_id) const {
    std::lock_guard lock(jobs_mu_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<TransferJob> transfers() const {
    std::lock_guard lock(jobs_mu_);
    std::vector<TransferJob> out;
    for (const auto& [_, j] : jobs_) out.push_back(j);
    return out;
  }

  // -------------------------------------------------------------------------
  // View and scanning

  std::shared_ptr<const ViewModel> current_view() const {
    std::lock_guard lock(view_mu_);
    return view_;
  }

  /// The frame the scanner is currently showing, if there is a frame source.
  std::optional<GrayFrame> current_frame() const {
    std::lock_guard lock(scan_mu_);
    return frame_;
  }

  std::vector<recognizer::Recognition> scan(const GrayFrame& frame) const {
    return recognizer::scan_frame(frame, registry_.list_devices(), cfg_.scan);
  }

  // -------------------------------------------------------------------------
  // Network

  std::vector<pairnet::LinkStatus> move_endpoint(const std::string& address, pairnet::Position p) {
    auto links = network_.move_endpoint(address, p);
    logger()->info("hub event=moved address={} x_m={} y_m={}", address, p.x, p.y);
    return links;
  }

  Json topology() const { return network_.topology_json(); }

  /// Session state per connected agent address.
  std::map<std::string, std::string> session_states() const {
    std::map<std::string, std::string> out;
    for (const auto& l : connected_links()) {
      std::lock_guard lock(l->mu);
      out[l->address] = l->session ? std::string(pairnet::to_string(l->session->state)) : "None";
    }
    return out;
  }

  int active_sessions() const {
    int n = 0;
    for (const auto& l : connected_links()) {
      std::lock_guard lock(l->mu);
      if (l->session && l->session->active()) ++n;
    }
    return n;
  }

  std::optional<std::string> last_reject(const std::string& address) const {
    auto l = link_for(address);
    if (!l) return std::nullopt;
    std::lock_guard lock(l->mu);
    return l->last_reject;
  }

 private:
  // -------------------------------------------------------------------------
  // Connections

  void accept_loop() {
    while (running_) {
      auto s = listener_.accept(200);
      prune_links();
      if (!s) continue;
      auto link = std::make_shared<Link>();
      link->stream = std::make_shared<pairnet::FramedStream>(std::move(*s));
      std::lock_guard lock(links_mu_);
      all_links_.push_back(link);
      link->reader = std::thread([this, link] { read_loop(link); });
    }
  }

  void prune_links() {
    std::vector<std::shared_ptr<Link>> done;
    {
      std::lock_guard lock(links_mu_);
      auto it = std::stable_partition(all_links_.begin(), all_links_.end(),
                                      [](const auto& l) { return !l->finished.load(); });
      done.assign(it, all_links_.end());
      all_links_.erase(it, all_links_.end());
    }
    for (auto& l : done) {
      if (l->reader.joinable()) l->reader.join();
    }
  }

  void read_loop(const std::shared_ptr<Link>& link) {
    try {
      auto hello = link->stream->receive(5000);
      if (!hello || hello->t != pairnet::MsgType::HELLO) {
        logger()->warn("hub event=handshake_failed reason=no_hello");
      } else if (admit(link, *hello)) {
        while (auto env = link->stream->receive()) on_envelope(*link, *env);
      }
    } catch (const Error& e) {
      logger()->warn("hub event=link_error address={} error={} message=\"{}\"", link->address,
                     arcon::to_string(e.kind()), e.message());
    }
    on_disconnect(link);
    link->finished = true;
  }

  bool admit(const std::shared_ptr<Link>& link, const pairnet::Envelope& hello) {
    const std::string address = hello.body.value("address", "");
    if (address.empty() || address == cfg_.master_address) {
      logger()->warn("hub event=handshake_failed reason=bad_address address={}", address);
      return false;
    }
    link->address = address;
    try {
      link->kind = parse_device_kind(hello.body.value("kind", "Generic"));
    } catch (const Error&) {
      link->kind = DeviceKind::Generic;
    }
    {
      std::lock_guard lock(links_mu_);
      auto it = links_.find(address);
      if (it != links_.end() && it->second != link) {
        std::lock_guard other(it->second->mu);
        if (it->second->connected && it->second->session && it->second->session->active()) {
          logger()->warn("hub event=pair_rejected address={} reason=already_paired", address);
          link->stream->send({pairnet::MsgType::PAIR_REJECT, 1,
                              Json{{"reason", "already_paired"}, {"message", address + " already has an active session"}}});
          return false;
        }
      }
      links_[address] = link;
    }
    network_.add_endpoint({address, {hello.body.value("x_m", 0.0), hello.body.value("y_m", 0.0)}, pairnet::Role::Slave});
    logger()->info("hub event=hello address={} kind={}", address, to_string(link->kind));
    try_pair(link);
    return true;
  }

  void on_envelope(Link& link, const pairnet::Envelope& env) {
    using pairnet::MsgType;
    std::vector<Event> publish;
    {
      std::lock_guard lock(link.mu);
      const double now = mono_now();
      if (link.session) link.session->touch(now);
      switch (env.t) {
        case MsgType::PAIR_ACCEPT:
          if (link.session && link.session->state == pairnet::SessionState::Pairing &&
              env.body.value("session_id", "") == link.session->session_id) {
            link.session->activate(now);
            if (env.body.contains("state")) set_device_state(link.device_id, state_from_json(env.body["state"]));
            logger()->info("hub event=paired address={} device={} session={}", link.address, link.device_id,
                           link.session->session_id);
          }
          break;
        case MsgType::CMD_RESULT: {
          auto it = link.pending.find(env.seq);
          if (it == link.pending.end()) break;
          if (env.body.value("ok", false)) {
            if (env.body.contains("state")) set_device_state(link.device_id, state_from_json(env.body["state"]));
            for (const auto& ej : env.body.value("events", Json::array())) {
              Event e = event_from_json(ej);
              e.device_id = link.device_id;
              publish.push_back(std::move(e));
            }
          }
          it->second->set_value(env.body);
          link.pending.erase(it);
          break;
        }
        case MsgType::EVENT:
          if (link.session && link.session->active()) {
            Event e = event_from_json(env.body);
            e.device_id = link.device_id;
            if (e.kind == EventKind::Telemetry) apply_telemetry(link.device_id, e.payload);
            publish.push_back(std::move(e));
          }
          break;
        case MsgType::PING:
          link.stream->send({MsgType::PONG, env.seq, Json::object()});
          break;
        case MsgType::BYE:
          close_session(link, env.body.value("reason", "bye"), false, publish);
          break;
        default:
          break;
      }
    }
    for (auto& e : publish) bus_.publish(std::move(e));
  }

  void on_disconnect(const std::shared_ptr<Link>& link) {
    std::vector<Event> lost;
    {
      std::lock_guard lock(link->mu);
      link->connected = false;
      close_session(*link, "disconnected", false, lost);
      link->fail_pending(Error(ErrorKind::TransportFailure, "link to " + link->address + " closed"));
    }
    {
      std::lock_guard lock(links_mu_);
      auto it = links_.find(link->address);
      if (it != links_.end() && it->second == link) links_.erase(it);
    }
    for (auto& e : lost) bus_.publish(std::move(e));
    if (!link->address.empty()) logger()->info("hub event=disconnected address={}", link->address);
  }

  // Caller holds link.mu. Appends a DeviceLost event if an open session closed.
  void close_session(Link& link, const std::string& reason, bool send_bye, std::vector<Event>& out) {
    if (!link.session || !link.session->close(reason)) return;
    if (send_bye && link.connected) {
      try {
        link.stream->send({pairnet::MsgType::BYE, ++link.next_seq, Json{{"reason", reason}}});
      } catch (const Error&) {
      }
    }
    link.fail_pending(reason == "timeout" ? Error(ErrorKind::Timeout, "session to " + link.address + " timed out")
                                          : Error(ErrorKind::SessionClosed, "session closed: " + reason));
    Event e;
    e.kind = EventKind::DeviceLost;
    e.device_id = link.device_id;
    e.payload = Json{{"reason", reason}, {"address", link.address}};
    out.push_back(std::move(e));
    logger()->warn("hub event=session_closed address={} reason={}", link.address, reason);
  }

  // -------------------------------------------------------------------------
  // Pairing

  void try_pair(const std::shared_ptr<Link>& link) {
    std::lock_guard pair_lock(pair_mu_);
    const auto rec = registry_.find_by_address(link->address);
    if (!rec) {
      logger()->debug("hub event=pair_deferred address={} reason=unregistered", link->address);
      return;
    }
    int open = 0;
    for (const auto& l : connected_links()) {
      if (l == link) continue;
      std::lock_guard lock(l->mu);
      if (l->session && l->session->state != pairnet::SessionState::Closed) ++open;
    }
    std::lock_guard lock(link->mu);
    if (!link->connected) return;
    if (link->session && link->session->state != pairnet::SessionState::Closed) return;
    try {
      const auto master = network_.endpoint(cfg_.master_address);
      const auto slave = network_.endpoint(link->address);
      link->session = pairnet::request_pair(master, slave, cfg_.net, open);
      link->device_id = rec->device_id;
      link->pairing_started = mono_now();
      link->last_reject.reset();
      link->stream->send({pairnet::MsgType::PAIR_REQUEST, ++link->next_seq,
                          Json{{"session_id", link->session->session_id}, {"master", cfg_.master_address}}});
    } catch (const Error& e) {
      const std::string reason =
          e.detail().is_object() ? e.detail().value("reason", std::string(arcon::to_string(e.kind())))
                                 : std::string(arcon::to_string(e.kind()));
      if (link->last_reject != reason) {
        logger()->warn("hub event=pair_rejected address={} reason={} error={} message=\"{}\"", link->address, reason,
                       arcon::to_string(e.kind()), e.message());
      }
      link->last_reject = reason;
      Json body = e.detail().is_object() ? e.detail() : Json::object();
      body["reason"] = reason;
      body["message"] = e.message();
      try {
        link->stream->send({pairnet::MsgType::PAIR_REJECT, ++link->next_seq, body});
      } catch (const Error&) {
      }
    }
  }

  std::shared_ptr<Link> require_paired(const DeviceRecord& rec) const {
    auto link = link_for(rec.address);
    if (link) {
      std::lock_guard lock(link->mu);
      if (link->session && link->session->active() && link->device_id == rec.device_id) return link;
    }
    throw Error(ErrorKind::NotPaired, rec.name + " (" + rec.address + ") has no active session",
                Json{{"device_id", rec.device_id}});
  }

  Json send_command(Link& link, const Json& command) {
    auto promise = std::make_shared<std::promise<Json>>();
    auto future = promise->get_future();
    std::string session_id;
    std::uint64_t seq = 0;
    {
      std::lock_guard lock(link.mu);
      if (!link.session || !link.session->active()) {
        throw Error(ErrorKind::SessionClosed, "no active session to " + link.address);
      }
      session_id = link.session->session_id;
      seq = ++link.next_seq;
      link.pending[seq] = promise;
      try {
        link.stream->send({pairnet::MsgType::CMD, seq, Json{{"command", command}}});
      } catch (const Error&) {
        link.pending.erase(seq);
        throw;
      }
    }
    const auto timeout = std::chrono::duration<double>(cfg_.net.heartbeat_timeout_s);
    if (future.wait_for(timeout) != std::future_status::ready) {
      std::vector<Event> lost;
      {
        std::lock_guard lock(link.mu);
        link.pending.erase(seq);
        if (link.session && link.session->session_id == session_id) close_session(link, "timeout", false, lost);
      }
      for (auto& e : lost) bus_.publish(std::move(e));
      throw Error(ErrorKind::Timeout, "no result from " + link.address + " within " +
                                          std::to_string(cfg_.net.heartbeat_timeout_s) + " s");
    }
    Json body = future.get();
    if (!body.value("ok", false)) {
      const std::string kind = body.value("error", "TransportFailure");
      ErrorKind k = ErrorKind::TransportFailure;
      error_kind_from_string(kind, k);
      throw Error(k, body.value("message", kind), body.value("detail", Json()));
    }
    return body;
  }

  // -------------------------------------------------------------------------
  // Background loops

  void heartbeat_loop() {
    double last_retry = mono_now();
    std::unique_lock wait_lock(wake_mu_);
    while (running_) {
      wake_.wait_for(wait_lock, std::chrono::duration<double>(cfg_.tick_s), [&] { return !running_; });
      if (!running_) break;
      wait_lock.unlock();
      const double now = mono_now();
      const bool retry = now - last_retry >= cfg_.pair_retry_s;
      if (retry) last_retry = now;
      for (const auto& link : connected_links()) {
        heartbeat_link(*link, now);
        if (retry) try_pair(link);
      }
      refresh_view();
      wait_lock.lock();
    }
  }

  void heartbeat_link(Link& link, double now) {
    using K = pairnet::HeartbeatAction::Kind;
    std::optional<double> distance;
    try {
      distance = network_.distance_between(cfg_.master_address, link.address);
    } catch (const Error&) {
    }
    std::vector<Event> lost;
    {
      std::lock_guard lock(link.mu);
      if (!link.session) return;
      if (link.session->state == pairnet::SessionState::Pairing &&
          now - link.pairing_started > cfg_.net.heartbeat_timeout_s) {
        link.session->close("pair_timeout");
        logger()->warn("hub event=pair_timeout address={}", link.address);
        return;
      }
      for (const auto& a : pairnet::heartbeat_tick(*link.session, now, cfg_.net, distance)) {
        if (a.kind == K::SendPing) {
          try {
            link.stream->send({pairnet::MsgType::PING, ++link.next_seq, Json::object()});
          } catch (const Error&) {
          }
        } else if (a.kind == K::Close) {
          if (a.reason == "range") {
            try {
              link.stream->send({pairnet::MsgType::BYE, ++link.next_seq, Json{{"reason", "range"}}});
            } catch (const Error&) {
            }
          }
          link.fail_pending(a.reason == "timeout" ? Error(ErrorKind::Timeout, "heartbeat timeout")
                                                  : Error(ErrorKind::SessionClosed, "session closed: " + a.reason));
          logger()->warn("hub event=session_closed address={} reason={}", link.address, a.reason);
        } else {
          Event e;
          e.kind = EventKind::DeviceLost;
          e.device_id = link.device_id;
          e.payload = Json{{"reason", a.reason}, {"address", link.address}};
          lost.push_back(std::move(e));
        }
      }
    }
    for (auto& e : lost) bus_.publish(std::move(e));
  }

  void run_transfer(TransferJob job, const std::shared_ptr<Link>& dst) {
    int index = 0;
    while (job.sent_bytes < job.total_bytes) {
      const int size = static_cast<int>(std::min<std::int64_t>(job.chunk_bytes, job.total_bytes - job.sent_bytes));
      try {
        send_command(*dst, arcon::to_json(Command{cmd::ReceiveChunk{job.job_id, index, size}}));
      } catch (const Error& e) {
        job.state = TransferState::Failed;
        job.error = std::string(arcon::to_string(e.kind()));
        logger()->warn("hub event=transfer_failed job={} sent_bytes={} error={}", job.job_id, job.sent_bytes,
                       *job.error);
        record_progress(job);
        return;
      }
      job.sent_bytes += size;
      ++index;
      if (job.sent_bytes == job.total_bytes) job.state = TransferState::Done;
      record_progress(job);
    }
    logger()->info("hub event=transfer_done job={} bytes={}", job.job_id, job.total_bytes);
  }

  void record_progress(const TransferJob& job) {
    {
      std::lock_guard lock(jobs_mu_);
      jobs_[job.job_id] = job;
    }
    Event e;
    e.kind = EventKind::TransferProgress;
    e.device_id = job.dst_device_id;
    e.payload = Json{{"job_id", job.job_id},
                     {"src", job.src_device_id},
                     {"dst", job.dst_device_id},
                     {"label", job.label},
                     {"sent_bytes", job.sent_bytes},
                     {"total_bytes", job.total_bytes},
                     {"state", std::string(to_string(job.state))}};
    if (job.error) e.payload["error"] = *job.error;
    bus_.publish(std::move(e));
  }

  void load_frame_list() {
    if (!cfg_.frame_source) return;
    if (std::filesystem::is_directory(*cfg_.frame_source)) {
      for (const auto& entry : std::filesystem::directory_iterator(*cfg_.frame_source)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") frames_.push_back(entry.path());
      }
      std::sort(frames_.begin(), frames_.end(),
                [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    } else {
      frames_.push_back(*cfg_.frame_source);
    }
  }

  // Plays the frame list in filename order, looping at the end.
  void scan_loop() {
    const double period = 1.0 / cfg_.frame_rate;
    const double t0 = mono_now();
    std::size_t tick = 0;
    std::optional<std::size_t> scanned_frame;
    std::uint64_t scanned_version = 0;
    while (running_) {
      if (!frames_.empty()) {
        const std::size_t idx = tick % frames_.size();
        const std::uint64_t version = registry_version_.load();
        if (scanned_frame != idx || scanned_version != version) {
          scan_once(idx);
          scanned_frame = idx;
          scanned_version = version;
        }
      }
      ++tick;
      std::unique_lock lock(wake_mu_);
      const double next = t0 + period * static_cast<double>(tick);
      wake_.wait_for(lock, std::chrono::duration<double>(std::max(0.0, next - mono_now())), [&] { return !running_; });
    }
  }

  void scan_once(std::size_t idx) {
    const auto& path = frames_[idx];
    try {
      GrayFrame frame = read_pgm(path);
      auto recs = scan(frame);
      std::lock_guard lock(scan_mu_);
      frame_ = std::move(frame);
      frame_id_ = path.filename().string();
      recognitions_ = std::move(recs);
      ++epoch_;
    } catch (const Error& e) {
      logger()->warn("hub event=scan_failed frame={} error={} message=\"{}\"", path.string(),
                     arcon::to_string(e.kind()), e.message());
      return;
    }
    refresh_view();
  }

  void refresh_view() {
    auto v = std::make_shared<ViewModel>();
    {
      std::lock_guard lock(scan_mu_);
      v->epoch = epoch_;
      v->frame_id = frame_id_;
      if (!v->frame_id && !frames_.empty()) v->frame_id = frames_.front().filename().string();
      for (const auto& r : recognitions_) {
        try {
          registry_.get_device(r.device_id);
          v->recognitions.push_back(r);
        } catch (const Error&) {
        }
      }
    }
    {
      std::lock_guard lock(state_mu_);
      v->device_states = device_states_;
    }
    for (const auto& l : connected_links()) {
      std::lock_guard lock(l->mu);
      if (l->session && !l->device_id.empty()) {
        v->sessions[l->device_id] = std::string(pairnet::to_string(l->session->state));
      }
    }
    {
      std::lock_guard lock(jobs_mu_);
      for (const auto& [_, j] : jobs_) {
        if (j.state == TransferState::Running) v->active_transfers.push_back(j);
      }
    }
    std::lock_guard lock(view_mu_);
    view_ = std::move(v);
  }

  // -------------------------------------------------------------------------
  // Helpers

  std::shared_ptr<Link> link_for(const std::string& address) const {
    std::lock_guard lock(links_mu_);
    auto it = links_.find(address);
    return it == links_.end() ? nullptr : it->second;
  }

  std::vector<std::shared_ptr<Link>> connected_links() const {
    std::lock_guard lock(links_mu_);
    std::vector<std::shared_ptr<Link>> out;
    for (const auto& [_, l] : links_) out.push_back(l);
    return out;
  }

  void set_device_state(const std::string& device_id, DeviceState s) {
    if (device_id.empty()) return;
    std::lock_guard lock(state_mu_);
    device_states_[device_id] = std::move(s);
  }

  void apply_telemetry(const std::string& device_id, const Json& payload) {
    std::lock_guard lock(state_mu_);
    auto it = device_states_.find(device_id);
    if (it == device_states_.end()) return;
    if (payload.contains("battery_pct")) it->second.battery_pct = payload["battery_pct"].get<int>();
    if (payload.contains("temperature_c")) it->second.temperature_c = payload["temperature_c"].get<double>();
  }

  HubConfig cfg_;
  registry::Registry registry_;
  std::atomic<std::uint64_t> registry_version_{0};
  pairnet::Network network_;
  EventBus bus_;
  pairnet::TcpListener listener_;

  std::atomic<bool> running_{false};
  std::mutex wake_mu_;
  std::condition_variable wake_;
  std::thread accept_thread_;
  std::thread heartbeat_thread_;
  std::thread scan_thread_;

  mutable std::mutex links_mu_;
  std::map<std::string, std::shared_ptr<Link>> links_;  // by agent address
  std::vector<std::shared_ptr<Link>> all_links_;        // every accepted connection, for joining
  std::mutex pair_mu_;

  mutable std::mutex state_mu_;
  std::map<std::string, DeviceState> device_states_;

  mutable std::mutex jobs_mu_;
  std::map<std::string, TransferJob> jobs_;
  std::vector<std::thread> transfer_threads_;

  std::vector<std::filesystem::path> frames_;
  mutable std::mutex scan_mu_;
  std::optional<GrayFrame> frame_;
  std::optional<std::string> frame_id_;
  std::vector<recognizer::Recognition> recognitions_;
  std::uint64_t epoch_ = 0;

  mutable std::mutex view_mu_;
  std::shared_ptr<const ViewModel> view_;
};

}  // namespace arcon::hub
