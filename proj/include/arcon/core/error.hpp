#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace arcon {

enum class ErrorKind {
  MalformedImage,
  InsufficientDetail,
  DuplicateImage,
  TooManyImages,
  NoImages,
  UnknownDevice,
  IoFailure,
  CorruptRegistry,
  WindowLargerThanFrame,
  FrameTooLarge,
  MalformedPayload,
  Truncated,
  OutOfRange,
  CapacityExceeded,
  AlreadyPaired,
  SessionClosed,
  Timeout,
  TransportFailure,
  UnknownEndpoint,
  DevicePoweredOff,
  InvalidArgument,
  UnsupportedCommand,
  NotPaired,
  SelfTransfer,
  ConfigInvalid,
  RegistryLoadFailure,
  PortUnavailable,
  Unreachable,
};

inline constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedImage: return "MalformedImage";
    case ErrorKind::InsufficientDetail: return "InsufficientDetail";
    case ErrorKind::DuplicateImage: return "DuplicateImage";
    case ErrorKind::TooManyImages: return "TooManyImages";
    case ErrorKind::NoImages: return "NoImages";
    case ErrorKind::UnknownDevice: return "UnknownDevice";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::CorruptRegistry: return "CorruptRegistry";
    case ErrorKind::WindowLargerThanFrame: return "WindowLargerThanFrame";
    case ErrorKind::FrameTooLarge: return "FrameTooLarge";
    case ErrorKind::MalformedPayload: return "MalformedPayload";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::CapacityExceeded: return "CapacityExceeded";
    case ErrorKind::AlreadyPaired: return "AlreadyPaired";
    case ErrorKind::SessionClosed: return "SessionClosed";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::TransportFailure: return "TransportFailure";
    case ErrorKind::UnknownEndpoint: return "UnknownEndpoint";
    case ErrorKind::DevicePoweredOff: return "DevicePoweredOff";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnsupportedCommand: return "UnsupportedCommand";
    case ErrorKind::NotPaired: return "NotPaired";
    case ErrorKind::SelfTransfer: return "SelfTransfer";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::RegistryLoadFailure: return "RegistryLoadFailure";
    case ErrorKind::PortUnavailable: return "PortUnavailable";
    case ErrorKind::Unreachable: return "Unreachable";
  }
  return "Unknown";
}

inline bool error_kind_from_string(std::string_view s, ErrorKind& out) {
  for (int i = 0; i <= static_cast<int>(ErrorKind::Unreachable); ++i) {
    auto k = static_cast<ErrorKind>(i);
    if (to_string(k) == s) {
      out = k;
      return true;
    }
  }
  return false;
}

/// Every failure surfaced by the library. `detail` carries structured
/// context (e.g. the per-image detail reports of a rejected registration).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, nlohmann::json detail = nullptr)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message),
        detail_(std::move(detail)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"error", std::string(to_string(kind_))}, {"message", message_}};
    if (!detail_.is_null()) j["detail"] = detail_;
    return j;
  }

 private:
  ErrorKind kind_;
  std::string message_;
  nlohmann::json detail_;
};

// Stable process exit codes: 0 ok, 1 infrastructure, 2 registration,
// 3 pairing, 4 argument, 5 device error.
inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedImage:
    case ErrorKind::InsufficientDetail:
    case ErrorKind::DuplicateImage:
    case ErrorKind::TooManyImages:
    case ErrorKind::NoImages:
      return 2;
    case ErrorKind::NotPaired:
    case ErrorKind::OutOfRange:
    case ErrorKind::CapacityExceeded:
    case ErrorKind::AlreadyPaired:
    case ErrorKind::SessionClosed:
      return 3;
    case ErrorKind::InvalidArgument:
    case ErrorKind::UnknownDevice:
    case ErrorKind::UnknownEndpoint:
    case ErrorKind::SelfTransfer:
      return 4;
    case ErrorKind::DevicePoweredOff:
    case ErrorKind::UnsupportedCommand:
      return 5;
    default:
      return 1;
  }
}

}  // namespace arcon
