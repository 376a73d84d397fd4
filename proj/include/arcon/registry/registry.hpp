#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "arcon/agents/command.hpp"
#include "arcon/core/util.hpp"
#include "arcon/registry/signature.hpp"

namespace arcon::registry {

inline constexpr std::size_t kMaxImages = 6;
inline constexpr int kFormatVersion = 1;

struct DeviceRecord {
  std::string device_id;
  std::string name;
  std::string address;
  DeviceKind kind = DeviceKind::Generic;
  CapabilitySet capabilities;
  std::vector<ImageSignature> signatures;
  double created_at = 0.0;

  friend bool operator==(const DeviceRecord&, const DeviceRecord&) = default;
};

struct Registration {
  std::string name;
  std::string address;
  DeviceKind kind = DeviceKind::Generic;
  std::optional<CapabilitySet> capabilities;  // defaults to everything the kind supports
  std::vector<GrayFrame> images;
};

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string encode_template(const recognizer::Patch& p) {
  static_assert(std::endian::native == std::endian::little, "template encoding assumes a little-endian host");
  std::string raw(p.size() * sizeof(double), '\0');
  std::memcpy(raw.data(), p.data(), raw.size());
  return base64_encode(raw);
}

inline recognizer::Patch decode_template(const std::string& b64) {
  const std::string raw = base64_decode(b64);
  recognizer::Patch p{};
  if (raw.size() != p.size() * sizeof(double)) {
    throw Error(ErrorKind::CorruptRegistry, "template has " + std::to_string(raw.size()) + " bytes");
  }
  std::memcpy(p.data(), raw.data(), raw.size());
  return p;
}

inline Json to_json(const ImageSignature& s) {
  return Json{{"dhash", hex64(s.dhash)},
              {"template", encode_template(s.templ)},
              {"detail_score", s.detail_score},
              {"source_dims", {{"w", s.source_width}, {"h", s.source_height}}}};
}

inline ImageSignature signature_from_json(const Json& j) {
  ImageSignature s;
  s.dhash = parse_hex64(j.at("dhash").get<std::string>());
  s.templ = decode_template(j.at("template").get<std::string>());
  s.detail_score = j.at("detail_score").get<double>();
  s.source_width = j.at("source_dims").at("w").get<int>();
  s.source_height = j.at("source_dims").at("h").get<int>();
  return s;
}

inline Json capabilities_to_json(const CapabilitySet& caps) {
  Json arr = Json::array();
  for (auto c : caps) arr.push_back(std::string(to_string(c)));
  return arr;
}

inline Json to_json(const DeviceRecord& r) {
  Json sigs = Json::array();
  for (const auto& s : r.signatures) sigs.push_back(to_json(s));
  return Json{{"device_id", r.device_id},
              {"name", r.name},
              {"address", r.address},
              {"kind", std::string(to_string(r.kind))},
              {"capabilities", capabilities_to_json(r.capabilities)},
              {"signatures", std::move(sigs)},
              {"created_at", r.created_at}};
}

/// API-facing view: everything except the template blobs.
inline Json summary_json(const DeviceRecord& r) {
  Json sigs = Json::array();
  for (const auto& s : r.signatures) {
    sigs.push_back({{"dhash", hex64(s.dhash)},
                    {"detail_score", s.detail_score},
                    {"source_dims", {{"w", s.source_width}, {"h", s.source_height}}}});
  }
  return Json{{"device_id", r.device_id},
              {"name", r.name},
              {"address", r.address},
              {"kind", std::string(to_string(r.kind))},
              {"capabilities", capabilities_to_json(r.capabilities)},
              {"signatures", std::move(sigs)},
              {"created_at", r.created_at}};
}

inline DeviceRecord record_from_json(const Json& j) {
  DeviceRecord r;
  r.device_id = j.at("device_id").get<std::string>();
  r.name = j.at("name").get<std::string>();
  r.address = j.at("address").get<std::string>();
  r.kind = parse_device_kind(j.at("kind").get<std::string>());
  for (const auto& c : j.at("capabilities")) r.capabilities.insert(parse_command_name(c.get<std::string>()));
  for (const auto& s : j.at("signatures")) r.signatures.push_back(signature_from_json(s));
  r.created_at = j.at("created_at").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Device records keyed by id. Readers share, writers are exclusive;
/// persist() writes a temp file and renames it into place.
class Registry {
 public:
  explicit Registry(double detail_threshold = kDefaultDetailThreshold) : threshold_(detail_threshold) {}

  Registry(Registry&& other) noexcept {
    std::unique_lock lock(other.mutex_);
    threshold_ = other.threshold_;
    devices_ = std::move(other.devices_);
    last_created_ = other.last_created_;
  }

  Registry& operator=(Registry&& other) noexcept {
    if (this != &other) {
      std::scoped_lock lock(mutex_, other.mutex_);
      threshold_ = other.threshold_;
      devices_ = std::move(other.devices_);
      last_created_ = other.last_created_;
    }
    return *this;
  }

  double detail_threshold() const { return threshold_; }

  DeviceRecord register_device(const Registration& req) {
    if (req.images.empty()) throw Error(ErrorKind::NoImages, "at least one image is required");
    if (req.images.size() > kMaxImages) {
      throw Error(ErrorKind::TooManyImages,
                  std::to_string(req.images.size()) + " images given, at most " + std::to_string(kMaxImages));
    }
    if (req.name.empty()) throw Error(ErrorKind::InvalidArgument, "device name must not be empty");
    if (req.address.empty()) throw Error(ErrorKind::InvalidArgument, "device address must not be empty");

    const CapabilitySet supported = capabilities_of(req.kind);
    CapabilitySet caps = req.capabilities.value_or(supported);
    for (auto c : caps) {
      if (!supported.contains(c)) {
        throw Error(ErrorKind::InvalidArgument, std::string(to_string(req.kind)) + " cannot execute " +
                                                    std::string(to_string(c)));
      }
    }

    // Signatures are computed outside the lock; they are pure.
    Json reports = Json::array();
    std::vector<std::size_t> failing;
    std::vector<DetailReport> detail(req.images.size());
    for (std::size_t i = 0; i < req.images.size(); ++i) {
      detail[i] = validate_detail(req.images[i], threshold_);
      Json r = to_json(detail[i]);
      r["index"] = i;
      reports.push_back(std::move(r));
      if (!detail[i].pass) failing.push_back(i);
    }
    if (!failing.empty()) {
      std::string which;
      for (auto i : failing) which += (which.empty() ? "" : ",") + std::to_string(i);
      throw Error(ErrorKind::InsufficientDetail, "insufficient detail in image(s) " + which,
                  Json{{"reports", reports}});
    }
    std::vector<ImageSignature> sigs;
    sigs.reserve(req.images.size());
    for (const auto& img : req.images) sigs.push_back(make_signature(img, threshold_));
    for (std::size_t i = 0; i < sigs.size(); ++i) {
      for (std::size_t k = 0; k < i; ++k) {
        if (is_duplicate(sigs[i], sigs[k])) {
          throw Error(ErrorKind::DuplicateImage,
                      "image " + std::to_string(i) + " duplicates image " + std::to_string(k),
                      Json{{"index", i}, {"duplicate_of", k}});
        }
      }
    }

    std::unique_lock lock(mutex_);
    for (const auto& d : devices_) {
      if (d.address == req.address) {
        throw Error(ErrorKind::InvalidArgument, "address '" + req.address + "' already registered");
      }
    }
    DeviceRecord rec;
    rec.device_id = new_uuid();
    rec.name = req.name;
    rec.address = req.address;
    rec.kind = req.kind;
    rec.capabilities = std::move(caps);
    rec.signatures = std::move(sigs);
    rec.created_at = std::max(unix_now(), last_created_ + 1e-3);
    last_created_ = rec.created_at;
    devices_.push_back(rec);
    sort_locked();
    return rec;
  }

  std::vector<DeviceRecord> list_devices() const {
    std::shared_lock lock(mutex_);
    return devices_;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return devices_.size();
  }

  DeviceRecord get_device(const std::string& id) const {
    std::shared_lock lock(mutex_);
    for (const auto& d : devices_) {
      if (d.device_id == id) return d;
    }
    throw Error(ErrorKind::UnknownDevice, "no device '" + id + "'");
  }

  std::optional<DeviceRecord> find_by_address(const std::string& address) const {
    std::shared_lock lock(mutex_);
    for (const auto& d : devices_) {
      if (d.address == address) return d;
    }
    return std::nullopt;
  }

  DeviceRecord remove_device(const std::string& id) {
    std::unique_lock lock(mutex_);
    auto it = std::find_if(devices_.begin(), devices_.end(), [&](const auto& d) { return d.device_id == id; });
    if (it == devices_.end()) throw Error(ErrorKind::UnknownDevice, "no device '" + id + "'");
    DeviceRecord removed = std::move(*it);
    devices_.erase(it);
    return removed;
  }

  /// Serialized registry file contents.
  std::string serialize() const {
    std::shared_lock lock(mutex_);
    Json devices = Json::array();
    for (const auto& d : devices_) devices.push_back(to_json(d));
    const std::string payload = canonical_dump(devices);
    Json top{{"version", kFormatVersion}, {"devices", std::move(devices)}, {"crc32", hex32(crc32_of(payload))}};
    return canonical_dump(top);
  }

  std::size_t persist(const std::filesystem::path& path) const {
    const std::string bytes = serialize();
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + tmp.string());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      out.flush();
      if (!out) throw Error(ErrorKind::IoFailure, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "rename to " + path.string() + ": " + ec.message());
    return bytes.size();
  }

  static Registry deserialize(std::string_view bytes, double detail_threshold = kDefaultDetailThreshold) {
    Registry reg(detail_threshold);
    try {
      const Json top = Json::parse(bytes);
      if (!top.is_object() || top.size() != 3 || !top.contains("version") || !top.contains("devices") ||
          !top.contains("crc32")) {
        throw Error(ErrorKind::CorruptRegistry, "unexpected top-level schema");
      }
      if (!top["version"].is_number_integer() || top["version"].get<int>() != kFormatVersion) {
        throw Error(ErrorKind::CorruptRegistry, "unsupported registry version");
      }
      const Json& devices = top["devices"];
      if (!devices.is_array()) throw Error(ErrorKind::CorruptRegistry, "devices must be an array");
      if (top["crc32"] != hex32(crc32_of(canonical_dump(devices)))) {
        throw Error(ErrorKind::CorruptRegistry, "checksum mismatch");
      }
      for (const auto& d : devices) {
        DeviceRecord rec = record_from_json(d);
        if (rec.signatures.empty() || rec.signatures.size() > kMaxImages || rec.name.empty()) {
          throw Error(ErrorKind::CorruptRegistry, "record '" + rec.device_id + "' violates invariants");
        }
        reg.last_created_ = std::max(reg.last_created_, rec.created_at);
        reg.devices_.push_back(std::move(rec));
      }
      reg.sort_locked();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::CorruptRegistry) throw;
      throw Error(ErrorKind::CorruptRegistry, e.message());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::CorruptRegistry, e.what());
    }
    return reg;
  }

  static Registry load(const std::filesystem::path& path, double detail_threshold = kDefaultDetailThreshold) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open registry " + path.string());
    const std::string bytes(std::istreambuf_iterator<char>(in), {});
    return deserialize(bytes, detail_threshold);
  }

 private:
  void sort_locked() {
    std::sort(devices_.begin(), devices_.end(), [](const DeviceRecord& a, const DeviceRecord& b) {
      if (a.created_at != b.created_at) return a.created_at < b.created_at;
      return a.device_id < b.device_id;
    });
  }

  mutable std::shared_mutex mutex_;
  double threshold_ = kDefaultDetailThreshold;
  std::vector<DeviceRecord> devices_;
  double last_created_ = 0.0;
};

}  // namespace arcon::registry
