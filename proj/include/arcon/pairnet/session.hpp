#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "arcon/core/error.hpp"
#include "arcon/core/util.hpp"

namespace arcon::pairnet {

enum class Role { Master, Slave };

struct Position {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Endpoint {
  std::string address;
  Position position;
  Role role = Role::Slave;
};

struct NetConfig {
  int max_slaves = 7;
  double max_range_m = 8.0;
  double heartbeat_interval_s = 2.0;
  double heartbeat_timeout_s = 6.0;

  void validate() const {
    if (max_slaves < 1) throw Error(ErrorKind::ConfigInvalid, "max_slaves must be >= 1");
    if (!(max_range_m > 0)) throw Error(ErrorKind::ConfigInvalid, "max_range_m must be positive");
    if (!(heartbeat_interval_s > 0)) throw Error(ErrorKind::ConfigInvalid, "heartbeat interval must be positive");
    if (!(heartbeat_timeout_s > heartbeat_interval_s)) {
      throw Error(ErrorKind::ConfigInvalid, "heartbeat timeout must exceed the interval");
    }
  }
};

inline NetConfig net_config_from_json(const Json& j) {
  NetConfig c;
  if (j.is_null()) return c;
  c.max_slaves = j.value("max_slaves", c.max_slaves);
  c.max_range_m = j.value("max_range_m", c.max_range_m);
  c.heartbeat_interval_s = j.value("heartbeat_interval_s", c.heartbeat_interval_s);
  c.heartbeat_timeout_s = j.value("heartbeat_timeout_s", c.heartbeat_timeout_s);
  c.validate();
  return c;
}

enum class SessionState { Pairing, Active, Closed };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Pairing: return "Pairing";
    case SessionState::Active: return "Active";
    case SessionState::Closed: return "Closed";
  }
  return "Closed";
}

/// Master-side view of one pairing. Legal transitions are Pairing->Active,
/// Pairing->Closed and Active->Closed; Closed is terminal.
struct PairingSession {
  std::string session_id;
  std::string master_addr;
  std::string slave_addr;
  SessionState state = SessionState::Pairing;
  double established_at = 0.0;
  double last_seen = 0.0;
  double last_ping = 0.0;
  std::string close_reason;

  void activate(double now) {
    if (state != SessionState::Pairing) {
      throw Error(ErrorKind::SessionClosed, "cannot activate a session in state " + std::string(to_string(state)));
    }
    state = SessionState::Active;
    established_at = now;
    last_seen = now;
    last_ping = now;
  }

  /// Returns false if the session was already closed.
  bool close(std::string reason) {
    if (state == SessionState::Closed) return false;
    state = SessionState::Closed;
    close_reason = std::move(reason);
    return true;
  }

  void touch(double now) {
    if (state != SessionState::Closed) last_seen = std::max(last_seen, now);
  }

  bool active() const { return state == SessionState::Active; }
};

/// Admission decision for a pairing request. On success the returned
/// session is in Pairing state; it becomes Active once PAIR_ACCEPT arrives.
/// Rejections carry {"reason": "range" | "capacity" | "already_paired"}.
inline PairingSession request_pair(const Endpoint& master, const Endpoint& slave, const NetConfig& cfg,
                                   int active_count, bool slave_already_active = false) {
  if (slave_already_active) {
    throw Error(ErrorKind::AlreadyPaired, slave.address + " already has an active session",
                Json{{"reason", "already_paired"}});
  }
  const double d = distance(master.position, slave.position);
  if (!(d <= cfg.max_range_m)) {
    throw Error(ErrorKind::OutOfRange,
                slave.address + " is " + std::to_string(d) + " m away (max " + std::to_string(cfg.max_range_m) + ")",
                Json{{"reason", "range"}, {"distance_m", d}});
  }
  if (active_count >= cfg.max_slaves) {
    throw Error(ErrorKind::CapacityExceeded,
                "master already has " + std::to_string(active_count) + " active sessions",
                Json{{"reason", "capacity"}, {"active", active_count}});
  }
  PairingSession s;
  s.session_id = new_uuid();
  s.master_addr = master.address;
  s.slave_addr = slave.address;
  s.state = SessionState::Pairing;
  return s;
}

struct HeartbeatAction {
  enum class Kind { SendPing, Close, DeviceLost };
  Kind kind;
  std::string reason;

  friend bool operator==(const HeartbeatAction&, const HeartbeatAction&) = default;
};

/// Advances one Active session to `now`. `distance_m`, when given, is the
/// current master-slave distance; exceeding max_range_m closes the session
/// with reason "range". A silent slave (now - last_seen > timeout) closes it
/// with reason "timeout" and reports DeviceLost.
inline std::vector<HeartbeatAction> heartbeat_tick(PairingSession& s, double now, const NetConfig& cfg,
                                                   std::optional<double> distance_m = std::nullopt) {
  using K = HeartbeatAction::Kind;
  std::vector<HeartbeatAction> actions;
  if (!s.active()) return actions;
  if (now - s.last_seen > cfg.heartbeat_timeout_s) {
    s.close("timeout");
    actions.push_back({K::Close, "timeout"});
    actions.push_back({K::DeviceLost, "timeout"});
    return actions;
  }
  if (distance_m && !(*distance_m <= cfg.max_range_m)) {
    s.close("range");
    actions.push_back({K::Close, "range"});
    actions.push_back({K::DeviceLost, "range"});
    return actions;
  }
  if (now - std::max(s.last_seen, s.last_ping) >= cfg.heartbeat_interval_s) {
    s.last_ping = now;
    actions.push_back({K::SendPing, ""});
  }
  return actions;
}

struct LinkStatus {
  std::string address;
  double distance_m = 0.0;
  bool in_range = false;

  friend bool operator==(const LinkStatus&, const LinkStatus&) = default;
};

/// Simulated physical layout: endpoint positions in meters. Connectivity
/// itself runs over local sockets; positions only gate pairing.
class Network {
 public:
  Network() = default;
  explicit Network(NetConfig cfg) : cfg_(cfg) {}

  const NetConfig& config() const { return cfg_; }

  void add_endpoint(Endpoint e) {
    std::lock_guard lock(mutex_);
    endpoints_[e.address] = std::move(e);
  }

  bool contains(const std::string& address) const {
    std::lock_guard lock(mutex_);
    return endpoints_.contains(address);
  }

  Endpoint endpoint(const std::string& address) const {
    std::lock_guard lock(mutex_);
    auto it = endpoints_.find(address);
    if (it == endpoints_.end()) throw Error(ErrorKind::UnknownEndpoint, "no endpoint '" + address + "'");
    return it->second;
  }

  std::vector<Endpoint> endpoints() const {
    std::lock_guard lock(mutex_);
    std::vector<Endpoint> out;
    for (const auto& [_, e] : endpoints_) out.push_back(e);
    return out;
  }

  /// Moves an endpoint and reports every master/slave link touching it.
  /// Sessions are not closed here; the next heartbeat tick does that.
  std::vector<LinkStatus> move_endpoint(const std::string& address, Position p) {
    std::lock_guard lock(mutex_);
    auto it = endpoints_.find(address);
    if (it == endpoints_.end()) throw Error(ErrorKind::UnknownEndpoint, "no endpoint '" + address + "'");
    it->second.position = p;
    std::vector<LinkStatus> out;
    for (const auto& [addr, other] : endpoints_) {
      if (addr == address || other.role == it->second.role) continue;
      const double d = distance(p, other.position);
      out.push_back({it->second.role == Role::Slave ? address : addr, d, d <= cfg_.max_range_m});
    }
    return out;
  }

  double distance_between(const std::string& a, const std::string& b) const {
    return distance(endpoint(a).position, endpoint(b).position);
  }

  /// Topology file: {"endpoints":[{"address","x_m","y_m","role"}]}.
  void load_topology(const Json& j) {
    for (const auto& e : j.at("endpoints")) {
      const auto role = e.value("role", "Slave");
      if (role != "Master" && role != "Slave") throw Error(ErrorKind::ConfigInvalid, "role must be Master or Slave");
      add_endpoint(Endpoint{e.at("address").get<std::string>(), Position{e.at("x_m").get<double>(), e.at("y_m").get<double>()},
                            role == "Master" ? Role::Master : Role::Slave});
    }
  }

  Json topology_json() const {
    Json arr = Json::array();
    for (const auto& e : endpoints()) {
      arr.push_back({{"address", e.address},
                     {"x_m", e.position.x},
                     {"y_m", e.position.y},
                     {"role", e.role == Role::Master ? "Master" : "Slave"}});
    }
    return Json{{"endpoints", arr}};
  }

 private:
  NetConfig cfg_;
  mutable std::mutex mutex_;
  std::map<std::string, Endpoint> endpoints_;
};

}  // namespace arcon::pairnet
