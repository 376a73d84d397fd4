#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "arcon/pairnet/session.hpp"
#include "arcon/pairnet/socket.hpp"
#include "arcon/recognizer/scan.hpp"
#include "arcon/registry/signature.hpp"

namespace arcon::hub {

struct HubConfig {
  std::filesystem::path registry_path;
  std::optional<std::filesystem::path> frame_source;  // directory of .pgm frames or one still frame
  std::optional<std::filesystem::path> topology_path;
  pairnet::NetConfig net;
  recognizer::ScanConfig scan;
  std::string api_listen = "127.0.0.1:7420";
  std::string pairnet_listen = "127.0.0.1:7421";
  std::string master_address = "hub";
  pairnet::Position master_position;
  double detail_threshold = registry::kDefaultDetailThreshold;
  double frame_rate = 2.0;
  double pair_retry_s = 5.0;
  double tick_s = 0.1;
  int chunk_bytes = 256;

  void validate() const {
    net.validate();
    scan.validate();
    if (registry_path.empty()) throw Error(ErrorKind::ConfigInvalid, "registry_path is required");
    if (frame_source && !std::filesystem::exists(*frame_source)) {
      throw Error(ErrorKind::ConfigInvalid, "frame_source " + frame_source->string() + " does not exist");
    }
    if (topology_path && !std::filesystem::exists(*topology_path)) {
      throw Error(ErrorKind::ConfigInvalid, "topology " + topology_path->string() + " does not exist");
    }
    if (!(frame_rate > 0)) throw Error(ErrorKind::ConfigInvalid, "frame_rate must be positive");
    if (!(pair_retry_s > 0)) throw Error(ErrorKind::ConfigInvalid, "pair_retry_s must be positive");
    if (!(tick_s > 0)) throw Error(ErrorKind::ConfigInvalid, "tick_s must be positive");
    if (chunk_bytes < 1) throw Error(ErrorKind::ConfigInvalid, "chunk_bytes must be >= 1");
    pairnet::parse_host_port(api_listen);
    pairnet::parse_host_port(pairnet_listen);
  }
};

inline recognizer::ScanConfig scan_config_from_json(const Json& j) {
  recognizer::ScanConfig c;
  if (j.is_null()) return c;
  if (j.contains("scales")) c.scales = j["scales"].get<std::vector<double>>();
  c.stride = j.value("stride", c.stride);
  c.threshold = j.value("threshold", c.threshold);
  c.max_simultaneous = j.value("max_simultaneous", c.max_simultaneous);
  return c;
}

/// Relative paths resolve against `base_dir` (the config file's directory).
inline HubConfig hub_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return !p.empty() && path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  try {
    HubConfig c;
    c.registry_path = resolve(j.value("registry_path", ""));
    if (j.contains("frame_source") && !j["frame_source"].is_null()) {
      c.frame_source = resolve(j["frame_source"].get<std::string>());
    }
    if (j.contains("topology_path") && !j["topology_path"].is_null()) {
      c.topology_path = resolve(j["topology_path"].get<std::string>());
    }
    c.net = pairnet::net_config_from_json(j.value("net", Json()));
    c.scan = scan_config_from_json(j.value("scan", Json()));
    c.api_listen = j.value("api_listen", c.api_listen);
    c.pairnet_listen = j.value("pairnet_listen", c.pairnet_listen);
    c.master_address = j.value("master_address", c.master_address);
    if (j.contains("master_position")) {
      c.master_position = {j["master_position"].value("x_m", 0.0), j["master_position"].value("y_m", 0.0)};
    }
    c.detail_threshold = j.value("detail_threshold", c.detail_threshold);
    c.frame_rate = j.value("frame_rate", c.frame_rate);
    c.pair_retry_s = j.value("pair_retry_s", c.pair_retry_s);
    c.tick_s = j.value("tick_s", c.tick_s);
    c.chunk_bytes = j.value("chunk_bytes", c.chunk_bytes);
    c.validate();
    return c;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInvalid) throw;
    throw Error(ErrorKind::ConfigInvalid, e.message());
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
}

}  // namespace arcon::hub
