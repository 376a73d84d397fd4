#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "arcon/agents/command.hpp"

namespace arcon::agents {

struct Outcome {
  DeviceState state;
  std::vector<Event> events;
};

namespace detail {

inline Event make_event(EventKind kind, Json payload) {
  Event e;
  e.kind = kind;
  e.payload = std::move(payload);
  return e;
}

inline void require_capability(DeviceKind kind, const Command& c) {
  if (!capabilities_of(kind).contains(name_of(c))) {
    throw Error(ErrorKind::UnsupportedCommand,
                std::string(to_string(kind)) + " does not support " + std::string(to_string(name_of(c))));
  }
}

// Off devices accept only PowerOn and GetStatus.
inline void require_powered(const DeviceState& s, const Command& c) {
  const auto n = name_of(c);
  if (s.power == Power::Off && n != CommandName::PowerOn && n != CommandName::GetStatus) {
    throw Error(ErrorKind::DevicePoweredOff, std::string(to_string(n)) + " rejected while powered off");
  }
}

// Transitions shared by every device kind. Returns false when the command
// is kind-specific and was not handled.
inline bool apply_common(DeviceState& s, const Command& c, std::vector<Event>& events) {
  if (std::holds_alternative<cmd::PowerOn>(c)) {
    s.power = Power::On;
    events.push_back(make_event(EventKind::PowerChanged, {{"power", "On"}}));
  } else if (std::holds_alternative<cmd::PowerOff>(c)) {
    s.power = Power::Off;
    s.now_playing.reset();
    events.push_back(make_event(EventKind::PowerChanged, {{"power", "Off"}}));
  } else if (std::holds_alternative<cmd::GetStatus>(c)) {
  } else if (const auto* v = std::get_if<cmd::SetVolume>(&c)) {
    if (v->level < 0 || v->level > 100) {
      throw Error(ErrorKind::InvalidArgument, "volume " + std::to_string(v->level) + " outside 0-100");
    }
    s.volume = v->level;
    events.push_back(make_event(EventKind::VolumeChanged, {{"volume", v->level}}));
  } else if (const auto* rc = std::get_if<cmd::ReceiveChunk>(&c)) {
    if (rc->size_bytes < 0 || rc->index < 0) throw Error(ErrorKind::InvalidArgument, "negative chunk index or size");
  } else {
    return false;
  }
  return true;
}

}  // namespace detail

/// Pure speaker transition. Throws DevicePoweredOff, InvalidArgument or
/// UnsupportedCommand; the input state is never modified.
inline Outcome speaker_apply(const DeviceState& state, const Command& c) {
  detail::require_capability(DeviceKind::Speaker, c);
  detail::require_powered(state, c);
  Outcome out{state, {}};
  if (detail::apply_common(out.state, c, out.events)) return out;
  if (const auto* p = std::get_if<cmd::PlayTrack>(&c)) {
    out.state.now_playing = p->track;
    out.events.push_back(detail::make_event(EventKind::TrackChanged, {{"track", p->track}}));
  } else if (std::holds_alternative<cmd::StopTrack>(c)) {
    out.state.now_playing.reset();
    out.events.push_back(detail::make_event(EventKind::TrackChanged, {{"track", nullptr}}));
  }
  return out;
}

/// Pure laptop transition. MoveCursor clamps into [0, w-1] x [0, h-1].
inline Outcome laptop_apply(const DeviceState& state, const Command& c) {
  detail::require_capability(DeviceKind::Laptop, c);
  detail::require_powered(state, c);
  Outcome out{state, {}};
  if (detail::apply_common(out.state, c, out.events)) return out;
  if (const auto* m = std::get_if<cmd::MoveCursor>(&c)) {
    const Size screen = out.state.screen.value_or(Size{1366, 768});
    const Point cur = out.state.cursor.value_or(Point{0, 0});
    const long long nx = std::clamp<long long>(static_cast<long long>(cur.x) + m->dx, 0, screen.w - 1);
    const long long ny = std::clamp<long long>(static_cast<long long>(cur.y) + m->dy, 0, screen.h - 1);
    out.state.screen = screen;
    out.state.cursor = Point{static_cast<int>(nx), static_cast<int>(ny)};
    out.events.push_back(detail::make_event(EventKind::CursorMoved, {{"x", nx}, {"y", ny}}));
  }
  return out;
}

inline Outcome generic_apply(const DeviceState& state, const Command& c) {
  detail::require_capability(DeviceKind::Generic, c);
  detail::require_powered(state, c);
  Outcome out{state, {}};
  detail::apply_common(out.state, c, out.events);
  return out;
}

inline Outcome apply(DeviceKind kind, const DeviceState& state, const Command& c) {
  switch (kind) {
    case DeviceKind::Speaker: return speaker_apply(state, c);
    case DeviceKind::Laptop: return laptop_apply(state, c);
    case DeviceKind::Generic: return generic_apply(state, c);
  }
  throw Error(ErrorKind::UnsupportedCommand, "unknown device kind");
}

/// Replays a command log from `initial`. Failed commands leave the state
/// untouched, exactly as they do live.
inline DeviceState replay(DeviceKind kind, DeviceState initial, const std::vector<Command>& log) {
  for (const auto& c : log) {
    try {
      initial = apply(kind, initial, c).state;
    } catch (const Error&) {
    }
  }
  return initial;
}

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

struct TelemetryStep {
  double at_s = 0.0;
  std::optional<int> battery_pct;
  std::optional<double> temperature_c;
};

/// Piecewise-constant script: each step's populated fields take effect from
/// at_s onward until overridden by a later step.
struct TelemetrySchedule {
  double interval_s = 5.0;
  std::vector<TelemetryStep> steps;
};

inline TelemetrySchedule schedule_from_json(const Json& j) {
  TelemetrySchedule s;
  if (j.is_null()) return s;
  s.interval_s = j.value("interval_s", 5.0);
  if (!(s.interval_s > 0)) throw Error(ErrorKind::ConfigInvalid, "telemetry interval must be positive");
  for (const auto& step : j.value("schedule", Json::array())) {
    TelemetryStep t;
    t.at_s = step.value("at_s", 0.0);
    if (step.contains("battery_pct")) t.battery_pct = step["battery_pct"].get<int>();
    if (step.contains("temperature_c")) t.temperature_c = step["temperature_c"].get<double>();
    s.steps.push_back(t);
  }
  std::stable_sort(s.steps.begin(), s.steps.end(),
                   [](const TelemetryStep& a, const TelemetryStep& b) { return a.at_s < b.at_s; });
  return s;
}

/// Applies the script values in effect at `now` (seconds since agent start)
/// and emits one Telemetry event per populated optional field.
inline Outcome telemetry_tick(const DeviceState& state, const TelemetrySchedule& schedule, double now) {
  Outcome out{state, {}};
  for (const auto& step : schedule.steps) {
    if (step.at_s > now) break;
    if (step.battery_pct) out.state.battery_pct = std::clamp(*step.battery_pct, 0, 100);
    if (step.temperature_c) out.state.temperature_c = step.temperature_c;
  }
  if (out.state.battery_pct) {
    out.events.push_back(detail::make_event(EventKind::Telemetry, {{"battery_pct", *out.state.battery_pct}}));
  }
  if (out.state.temperature_c) {
    out.events.push_back(detail::make_event(EventKind::Telemetry, {{"temperature_c", *out.state.temperature_c}}));
  }
  return out;
}

}  // namespace arcon::agents
