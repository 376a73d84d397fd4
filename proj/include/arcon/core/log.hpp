#pragma once

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <memory>
#include <string>

namespace arcon {

/// Process-wide stderr logger. Lines look like
///   2026-01-01T12:00:00.000 info hub event=paired address=spk-1
/// Level comes from ARCON_LOG (trace, debug, info, warn, error, off).
inline std::shared_ptr<spdlog::logger> logger() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("arcon");
    l->set_pattern("%Y-%m-%dT%H:%M:%S.%e %l %v");
    const char* env = std::getenv("ARCON_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
    return l;
  }();
  return instance;
}

}  // namespace arcon
