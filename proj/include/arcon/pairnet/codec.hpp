#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arcon/core/error.hpp"
#include "arcon/core/util.hpp"

namespace arcon::pairnet {

enum class MsgType { HELLO, PAIR_REQUEST, PAIR_ACCEPT, PAIR_REJECT, CMD, CMD_RESULT, EVENT, PING, PONG, BYE };

inline constexpr std::string_view kMsgTypeNames[] = {"HELLO", "PAIR_REQUEST", "PAIR_ACCEPT", "PAIR_REJECT", "CMD",
                                                     "CMD_RESULT", "EVENT", "PING", "PONG", "BYE"};

inline std::string_view to_string(MsgType t) { return kMsgTypeNames[static_cast<int>(t)]; }

inline std::optional<MsgType> parse_msg_type(std::string_view s) {
  for (int i = 0; i < 10; ++i) {
    if (kMsgTypeNames[i] == s) return static_cast<MsgType>(i);
  }
  return std::nullopt;
}

struct Envelope {
  MsgType t = MsgType::PING;
  std::uint64_t seq = 0;
  Json body = Json::object();

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

inline constexpr std::size_t kHeaderBytes = 4;
inline constexpr std::size_t kMaxPayload = 1u << 20;

/// Canonical JSON payload. `seq` is omitted when zero and `body` when empty,
/// so a bare ping is {"t":"PING"}.
inline std::string payload_of(const Envelope& e) {
  if (!e.body.is_object()) throw Error(ErrorKind::MalformedPayload, "envelope body must be an object");
  Json j{{"t", std::string(to_string(e.t))}};
  if (e.seq != 0) j["seq"] = e.seq;
  if (!e.body.empty()) j["body"] = e.body;
  try {
    return canonical_dump(j);
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::MalformedPayload, ex.what());
  }
}

/// Frame = 4-byte big-endian payload length + canonical JSON payload.
inline std::string encode(const Envelope& e) {
  const std::string payload = payload_of(e);
  if (payload.size() > kMaxPayload) {
    throw Error(ErrorKind::FrameTooLarge, "payload of " + std::to_string(payload.size()) + " bytes exceeds 1 MiB");
  }
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string frame;
  frame.reserve(kHeaderBytes + payload.size());
  frame += static_cast<char>((n >> 24) & 0xFF);
  frame += static_cast<char>((n >> 16) & 0xFF);
  frame += static_cast<char>((n >> 8) & 0xFF);
  frame += static_cast<char>(n & 0xFF);
  frame += payload;
  return frame;
}

inline Envelope parse_payload(std::string_view payload) {
  Json j;
  try {
    j = Json::parse(payload);
  } catch (const Json::exception& ex) {
    throw Error(ErrorKind::MalformedPayload, ex.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::MalformedPayload, "payload is not an object");
  Envelope e;
  for (const auto& [key, value] : j.items()) {
    if (key == "t") {
      if (!value.is_string()) throw Error(ErrorKind::MalformedPayload, "'t' must be a string");
      const auto t = parse_msg_type(value.get<std::string>());
      if (!t) throw Error(ErrorKind::MalformedPayload, "unknown message type '" + value.get<std::string>() + "'");
      e.t = *t;
    } else if (key == "seq") {
      if (!value.is_number_unsigned()) throw Error(ErrorKind::MalformedPayload, "'seq' must be an unsigned integer");
      e.seq = value.get<std::uint64_t>();
    } else if (key == "body") {
      if (!value.is_object()) throw Error(ErrorKind::MalformedPayload, "'body' must be an object");
      e.body = value;
    } else {
      throw Error(ErrorKind::MalformedPayload, "unexpected field '" + key + "'");
    }
  }
  if (!j.contains("t")) throw Error(ErrorKind::MalformedPayload, "missing 't'");
  return e;
}

struct Decoded {
  Envelope envelope;
  std::size_t consumed = 0;
};

/// Decodes one frame from the front of `bytes`. Returns nullopt when more
/// bytes are needed; throws FrameTooLarge or MalformedPayload.
inline std::optional<Decoded> try_decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) return std::nullopt;
  const std::uint32_t n = (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
                          (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
  if (n > kMaxPayload) {
    throw Error(ErrorKind::FrameTooLarge, "declared payload of " + std::to_string(n) + " bytes exceeds 1 MiB");
  }
  if (bytes.size() - kHeaderBytes < n) return std::nullopt;
  const std::string_view payload(reinterpret_cast<const char*>(bytes.data()) + kHeaderBytes, n);
  return Decoded{parse_payload(payload), kHeaderBytes + n};
}

inline std::optional<Decoded> try_decode(std::string_view bytes) {
  return try_decode(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

/// Like try_decode, but an incomplete frame is a Truncated error.
inline Decoded decode(std::string_view bytes) {
  auto d = try_decode(bytes);
  if (!d) throw Error(ErrorKind::Truncated, "incomplete frame (" + std::to_string(bytes.size()) + " bytes available)");
  return std::move(*d);
}

/// Accumulates stream bytes and yields complete envelopes in order.
class FrameBuffer {
 public:
  void append(std::string_view bytes) { buf_.append(bytes); }

  std::optional<Envelope> next() {
    auto d = try_decode(std::string_view(buf_).substr(pos_));
    if (!d) {
      if (pos_ > 0) {
        buf_.erase(0, pos_);
        pos_ = 0;
      }
      return std::nullopt;
    }
    pos_ += d->consumed;
    return std::move(d->envelope);
  }

  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace arcon::pairnet
