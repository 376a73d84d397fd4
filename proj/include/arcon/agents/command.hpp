#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "arcon/core/error.hpp"
#include "arcon/core/util.hpp"

namespace arcon {

enum class DeviceKind { Speaker, Laptop, Generic };

inline std::string_view to_string(DeviceKind k) {
  switch (k) {
    case DeviceKind::Speaker: return "Speaker";
    case DeviceKind::Laptop: return "Laptop";
    case DeviceKind::Generic: return "Generic";
  }
  return "Generic";
}

inline DeviceKind parse_device_kind(std::string_view s) {
  if (s == "Speaker" || s == "speaker") return DeviceKind::Speaker;
  if (s == "Laptop" || s == "laptop") return DeviceKind::Laptop;
  if (s == "Generic" || s == "generic") return DeviceKind::Generic;
  throw Error(ErrorKind::InvalidArgument, "unknown device kind '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace cmd {
struct PowerOn { friend bool operator==(const PowerOn&, const PowerOn&) = default; };
struct PowerOff { friend bool operator==(const PowerOff&, const PowerOff&) = default; };
struct GetStatus { friend bool operator==(const GetStatus&, const GetStatus&) = default; };
struct SetVolume {
  int level = 0;
  friend bool operator==(const SetVolume&, const SetVolume&) = default;
};
struct PlayTrack {
  std::string track;
  friend bool operator==(const PlayTrack&, const PlayTrack&) = default;
};
struct StopTrack { friend bool operator==(const StopTrack&, const StopTrack&) = default; };
struct MoveCursor {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const MoveCursor&, const MoveCursor&) = default;
};
struct ReceiveChunk {
  std::string job_id;
  int index = 0;
  std::int64_t size_bytes = 0;
  friend bool operator==(const ReceiveChunk&, const ReceiveChunk&) = default;
};
}  // namespace cmd

using Command = std::variant<cmd::PowerOn, cmd::PowerOff, cmd::GetStatus, cmd::SetVolume, cmd::PlayTrack,
                             cmd::StopTrack, cmd::MoveCursor, cmd::ReceiveChunk>;

/// Discriminator of Command, in variant order. Used for capability sets.
enum class CommandName { PowerOn, PowerOff, GetStatus, SetVolume, PlayTrack, StopTrack, MoveCursor, ReceiveChunk };

inline constexpr std::string_view kCommandNames[] = {"PowerOn",   "PowerOff",  "GetStatus",  "SetVolume",
                                                     "PlayTrack", "StopTrack", "MoveCursor", "ReceiveChunk"};

inline CommandName name_of(const Command& c) { return static_cast<CommandName>(c.index()); }

inline std::string_view to_string(CommandName n) { return kCommandNames[static_cast<int>(n)]; }

inline CommandName parse_command_name(std::string_view s) {
  for (int i = 0; i < 8; ++i) {
    if (kCommandNames[i] == s) return static_cast<CommandName>(i);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown command '" + std::string(s) + "'");
}

using CapabilitySet = std::set<CommandName>;

inline CapabilitySet capabilities_of(DeviceKind k) {
  using N = CommandName;
  switch (k) {
    case DeviceKind::Speaker:
      return {N::PowerOn, N::PowerOff, N::GetStatus, N::SetVolume, N::PlayTrack, N::StopTrack, N::ReceiveChunk};
    case DeviceKind::Laptop:
      return {N::PowerOn, N::PowerOff, N::GetStatus, N::SetVolume, N::MoveCursor, N::ReceiveChunk};
    case DeviceKind::Generic:
      return {N::PowerOn, N::PowerOff, N::GetStatus, N::ReceiveChunk};
  }
  return {};
}

inline bool mutates_state(CommandName n) {
  return n != CommandName::GetStatus && n != CommandName::ReceiveChunk;
}

// Wire form: {"kind": "<name>", "args": {...}}; args omitted when empty.
inline Json to_json(const Command& c) {
  Json j{{"kind", std::string(to_string(name_of(c)))}};
  std::visit(
      [&j](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, cmd::SetVolume>) {
          j["args"] = {{"level", v.level}};
        } else if constexpr (std::is_same_v<T, cmd::PlayTrack>) {
          j["args"] = {{"track", v.track}};
        } else if constexpr (std::is_same_v<T, cmd::MoveCursor>) {
          j["args"] = {{"dx", v.dx}, {"dy", v.dy}};
        } else if constexpr (std::is_same_v<T, cmd::ReceiveChunk>) {
          j["args"] = {{"job_id", v.job_id}, {"index", v.index}, {"size_bytes", v.size_bytes}};
        }
      },
      c);
  return j;
}

namespace command_detail {

inline const Json& require(const Json& args, const char* key) {
  if (!args.is_object() || !args.contains(key)) {
    throw Error(ErrorKind::InvalidArgument, std::string("missing argument '") + key + "'");
  }
  return args.at(key);
}

inline std::int64_t require_int(const Json& args, const char* key) {
  const Json& v = require(args, key);
  if (!v.is_number_integer()) throw Error(ErrorKind::InvalidArgument, std::string("argument '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline int require_int32(const Json& args, const char* key) {
  const auto v = require_int(args, key);
  if (v < INT32_MIN || v > INT32_MAX) throw Error(ErrorKind::InvalidArgument, std::string("argument '") + key + "' out of range");
  return static_cast<int>(v);
}

inline std::string require_string(const Json& args, const char* key) {
  const Json& v = require(args, key);
  if (!v.is_string()) throw Error(ErrorKind::InvalidArgument, std::string("argument '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace command_detail

inline Command command_from_json(const Json& j) {
  using namespace command_detail;
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw Error(ErrorKind::InvalidArgument, "command must be an object with a string 'kind'");
  }
  const Json args = j.contains("args") ? j["args"] : Json::object();
  switch (parse_command_name(j["kind"].get<std::string>())) {
    case CommandName::PowerOn: return cmd::PowerOn{};
    case CommandName::PowerOff: return cmd::PowerOff{};
    case CommandName::GetStatus: return cmd::GetStatus{};
    case CommandName::SetVolume: return cmd::SetVolume{require_int32(args, "level")};
    case CommandName::PlayTrack: return cmd::PlayTrack{require_string(args, "track")};
    case CommandName::StopTrack: return cmd::StopTrack{};
    case CommandName::MoveCursor: return cmd::MoveCursor{require_int32(args, "dx"), require_int32(args, "dy")};
    case CommandName::ReceiveChunk:
      return cmd::ReceiveChunk{require_string(args, "job_id"), require_int32(args, "index"),
                               require_int(args, "size_bytes")};
  }
  throw Error(ErrorKind::InvalidArgument, "unknown command");
}

// ---------------------------------------------------------------------------
// Device state
// ---------------------------------------------------------------------------

enum class Power { On, Off };

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Size {
  int w = 0;
  int h = 0;
  friend bool operator==(const Size&, const Size&) = default;
};

struct DeviceState {
  Power power = Power::On;
  int volume = 50;
  std::optional<std::string> now_playing;
  std::optional<Point> cursor;
  std::optional<Size> screen;
  std::optional<int> battery_pct;
  std::optional<double> temperature_c;

  friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

inline DeviceState default_state(DeviceKind k) {
  DeviceState s;
  if (k == DeviceKind::Laptop) {
    s.cursor = Point{0, 0};
    s.screen = Size{1366, 768};
  }
  return s;
}

inline Json to_json(const DeviceState& s) {
  Json j{{"power", s.power == Power::On ? "On" : "Off"}, {"volume", s.volume}};
  j["now_playing"] = s.now_playing ? Json(*s.now_playing) : Json(nullptr);
  if (s.cursor) j["cursor"] = {{"x", s.cursor->x}, {"y", s.cursor->y}};
  if (s.screen) j["screen"] = {{"w", s.screen->w}, {"h", s.screen->h}};
  if (s.battery_pct) j["battery_pct"] = *s.battery_pct;
  if (s.temperature_c) j["temperature_c"] = *s.temperature_c;
  return j;
}

inline DeviceState state_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "device state must be an object");
  DeviceState s;
  if (j.contains("power")) {
    const auto p = j["power"].get<std::string>();
    if (p != "On" && p != "Off") throw Error(ErrorKind::InvalidArgument, "power must be On or Off");
    s.power = p == "On" ? Power::On : Power::Off;
  }
  if (j.contains("volume")) s.volume = j["volume"].get<int>();
  if (j.contains("now_playing") && !j["now_playing"].is_null()) s.now_playing = j["now_playing"].get<std::string>();
  if (j.contains("cursor")) s.cursor = Point{j["cursor"]["x"].get<int>(), j["cursor"]["y"].get<int>()};
  if (j.contains("screen")) s.screen = Size{j["screen"]["w"].get<int>(), j["screen"]["h"].get<int>()};
  if (j.contains("battery_pct")) s.battery_pct = j["battery_pct"].get<int>();
  if (j.contains("temperature_c")) s.temperature_c = j["temperature_c"].get<double>();
  return s;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

enum class EventKind { PowerChanged, VolumeChanged, TrackChanged, CursorMoved, Telemetry, TransferProgress, DeviceLost };

inline constexpr std::string_view kEventKindNames[] = {"PowerChanged", "VolumeChanged",    "TrackChanged", "CursorMoved",
                                                       "Telemetry",    "TransferProgress", "DeviceLost"};

inline std::string_view to_string(EventKind k) { return kEventKindNames[static_cast<int>(k)]; }

inline EventKind parse_event_kind(std::string_view s) {
  for (int i = 0; i < 7; ++i) {
    if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
  }
  throw Error(ErrorKind::MalformedPayload, "unknown event kind '" + std::string(s) + "'");
}

struct Event {
  EventKind kind = EventKind::Telemetry;
  std::string device_id;
  Json payload = Json::object();
  double at = 0.0;
  std::uint64_t seq = 0;  // assigned by the hub event bus

  friend bool operator==(const Event&, const Event&) = default;
};

inline Json to_json(const Event& e) {
  return Json{{"kind", std::string(to_string(e.kind))},
              {"device_id", e.device_id},
              {"payload", e.payload},
              {"at", e.at},
              {"seq", e.seq}};
}

inline Event event_from_json(const Json& j) {
  Event e;
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  e.device_id = j.value("device_id", "");
  e.payload = j.value("payload", Json::object());
  e.at = j.value("at", 0.0);
  e.seq = j.value("seq", std::uint64_t{0});
  return e;
}

}  // namespace arcon
