#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "arcon/registry/registry.hpp"
#include "support/fixtures.hpp"

using namespace arcon;
using namespace arcon::registry;
namespace t = arcon::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("arcon_registry_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

Registration speaker(const std::string& name, const std::string& address, std::vector<GrayFrame> images) {
  return Registration{name, address, DeviceKind::Speaker, std::nullopt, std::move(images)};
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Unreachable;
}

}  // namespace

TEST(ValidateDetail, UniformImageScoresZero) {
  const auto r = validate_detail(t::uniform(64, 64, 128), 2.0);
  EXPECT_EQ(r.score, 0.0);
  EXPECT_FALSE(r.pass);
}

TEST(ValidateDetail, HorizontalRampScoresOne) {
  const auto r = validate_detail(t::hramp(64, 64), 0.5);
  EXPECT_DOUBLE_EQ(r.score, 1.0);
  EXPECT_TRUE(r.pass);
}

TEST(ValidateDetail, CheckerboardMatchesBruteForce) {
  const GrayFrame board = t::checkerboard(64, 64, 8);
  const double oracle = t::detail_oracle(board);
  // 7 block edges in each of the 62 interior rows/columns, 255 each:
  // 2 * 62 * 7 * 255 / (62 * 62).
  EXPECT_NEAR(oracle, 57.58064516129032, 1e-9);
  const auto r = validate_detail(board, 2.0);
  EXPECT_NEAR(r.score, oracle, 1e-12);
  EXPECT_TRUE(r.pass);
}

TEST(ValidateDetail, MatchesOracleOnRandomImages) {
  std::mt19937 rng(5);
  for (int i = 0; i < 25; ++i) {
    const GrayFrame f = t::noise(9 + static_cast<int>(rng() % 60), 8 + static_cast<int>(rng() % 60), rng());
    EXPECT_NEAR(validate_detail(f).score, t::detail_oracle(f), 1e-9);
  }
}

TEST(ValidateDetail, RejectsMalformed) {
  GrayFrame f(16, 16);
  f.pixels.resize(10);
  EXPECT_EQ(kind_of([&] { validate_detail(f); }), ErrorKind::MalformedImage);
}

TEST(ValidateDetail, PaddingWithBorderValueNeverIncreasesScore) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 12 + static_cast<int>(rng() % 30), h = 12 + static_cast<int>(rng() % 30);
    const std::uint8_t border = static_cast<std::uint8_t>(rng() % 256);
    GrayFrame f = t::noise(w, h, rng());
    // Two-pixel ring of the pad value so the seam adds no gradient.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (x < 2 || y < 2 || x >= w - 2 || y >= h - 2) f.at(x, y) = border;
    const int pad = 1 + static_cast<int>(rng() % 20);
    GrayFrame padded(w + 2 * pad, h + pad, border);
    paste(padded, f, pad, 0);
    EXPECT_LE(validate_detail(padded).score, validate_detail(f).score + 1e-12);
  }
}

TEST(MakeSignature, UniformImageIsInsufficientDetail) {
  try {
    make_signature(t::uniform(64, 64, 128));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientDetail);
    EXPECT_EQ(e.detail()["score"], 0.0);
  }
}

TEST(MakeSignature, RampTemplateIncreasesAlongRows) {
  const auto sig = make_signature(t::hramp(64, 64), 0.5);  // ramp detail is exactly 1.0
  EXPECT_EQ(sig.dhash, 0xFFFFFFFFFFFFFFFFull);
  for (int y = 0; y < 32; ++y)
    for (int x = 1; x < 32; ++x) EXPECT_LT(sig.templ[y * 32 + x - 1], sig.templ[y * 32 + x]);
}

TEST(MakeSignature, TemplateEqualsIndependentResampler) {
  const GrayFrame photo = t::device_image(128, 96, 77);
  const auto sig = make_signature(photo);
  auto expected = t::resample_oracle_replicated(photo, Rect{0, 0, 128, 96}, 32, 32);
  double mean = 0;
  for (double v : expected) mean += v;
  mean /= expected.size();
  double norm = 0;
  for (double& v : expected) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(sig.templ[i], expected[i] / norm, 1e-9);
  EXPECT_EQ(sig.source_width, 128);
  EXPECT_EQ(sig.source_height, 96);
}

TEST(MakeSignature, TemplateIsZeroMeanUnitNormAndDeterministic) {
  std::mt19937 rng(8);
  for (int i = 0; i < 10; ++i) {
    const GrayFrame img = t::device_image(20 + static_cast<int>(rng() % 100), 20 + static_cast<int>(rng() % 100), rng());
    const auto a = make_signature(img);
    const auto b = make_signature(img);
    EXPECT_EQ(a, b);
    double mean = 0, norm = 0;
    for (double v : a.templ) {
      mean += v;
      norm += v * v;
    }
    EXPECT_NEAR(mean / 1024, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
  }
}

TEST(Register, SingleImage) {
  Registry reg;
  const auto rec = reg.register_device(speaker("Speaker", "spk-1", {t::device_image(64, 64, 1)}));
  EXPECT_EQ(rec.signatures.size(), 1u);
  EXPECT_EQ(rec.device_id.size(), 36u);
  EXPECT_EQ(rec.capabilities, capabilities_of(DeviceKind::Speaker));
}

TEST(Register, SevenImagesAreTooMany) {
  Registry reg;
  std::vector<GrayFrame> imgs;
  for (int i = 0; i < 7; ++i) imgs.push_back(t::device_image(64, 64, 10 + i));
  EXPECT_EQ(kind_of([&] { reg.register_device(speaker("s", "a", imgs)); }), ErrorKind::TooManyImages);
  imgs.pop_back();
  EXPECT_EQ(reg.register_device(speaker("s", "a", imgs)).signatures.size(), 6u);
}

TEST(Register, NoImages) {
  Registry reg;
  EXPECT_EQ(kind_of([&] { reg.register_device(speaker("s", "a", {})); }), ErrorKind::NoImages);
}

TEST(Register, SameImageTwiceIsDuplicate) {
  Registry reg;
  const auto img = t::device_image(64, 64, 3);
  EXPECT_EQ(kind_of([&] { reg.register_device(speaker("s", "a", {img, img})); }), ErrorKind::DuplicateImage);
}

TEST(Register, InsufficientDetailReportsEveryImage) {
  Registry reg;
  try {
    reg.register_device(speaker("s", "a", {t::device_image(64, 64, 3), t::uniform(64, 64, 9)}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientDetail);
    const auto& reports = e.detail()["reports"];
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_TRUE(reports[0]["pass"].get<bool>());
    EXPECT_FALSE(reports[1]["pass"].get<bool>());
    EXPECT_EQ(reports[1]["score"], 0.0);
  }
  EXPECT_EQ(reg.size(), 0u);
}

TEST(Register, EmptyNameAndForeignCapabilityRejected) {
  Registry reg;
  EXPECT_EQ(kind_of([&] { reg.register_device(speaker("", "a", {t::device_image(64, 64, 3)})); }),
            ErrorKind::InvalidArgument);
  Registration r = speaker("s", "a", {t::device_image(64, 64, 3)});
  r.capabilities = CapabilitySet{CommandName::MoveCursor};
  EXPECT_EQ(kind_of([&] { reg.register_device(r); }), ErrorKind::InvalidArgument);
}

TEST(Register, SignaturesMeetThreshold) {
  Registry reg(5.0);
  const auto rec = reg.register_device(speaker("s", "a", {t::device_image(64, 64, 3), t::device_image(50, 40, 4)}));
  for (const auto& s : rec.signatures) EXPECT_GE(s.detail_score, 5.0);
}

TEST(Registry, ListGetRemove) {
  Registry reg;
  EXPECT_TRUE(reg.list_devices().empty());
  const auto a = reg.register_device(speaker("A", "a", {t::device_image(64, 64, 1)}));
  const auto b = reg.register_device(speaker("B", "b", {t::device_image(64, 64, 2)}));
  const auto all = reg.list_devices();
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].device_id, a.device_id);
  EXPECT_EQ(all[1].device_id, b.device_id);
  EXPECT_EQ(reg.get_device(a.device_id), a);
  EXPECT_EQ(reg.remove_device(a.device_id), a);
  EXPECT_EQ(kind_of([&] { reg.get_device(a.device_id); }), ErrorKind::UnknownDevice);
  EXPECT_EQ(kind_of([&] { reg.remove_device(a.device_id); }), ErrorKind::UnknownDevice);
}

TEST(Registry, DuplicateAddressRejected) {
  Registry reg;
  reg.register_device(speaker("A", "same", {t::device_image(64, 64, 1)}));
  EXPECT_EQ(kind_of([&] { reg.register_device(speaker("B", "same", {t::device_image(64, 64, 2)})); }),
            ErrorKind::InvalidArgument);
}

TEST(Persist, EmptyRoundTrip) {
  Registry reg;
  const auto path = temp_path("empty.json");
  EXPECT_GT(reg.persist(path), 0u);
  EXPECT_TRUE(Registry::load(path).list_devices().empty());
}

TEST(Persist, FileIsCanonicalJsonWithChecksum) {
  Registry reg;
  reg.register_device(speaker("A", "a", {t::device_image(64, 64, 1)}));
  const std::string bytes = reg.serialize();
  const Json j = Json::parse(bytes);
  EXPECT_EQ(j.dump(), bytes);  // no whitespace, sorted keys
  EXPECT_EQ(j["version"], 1);
  EXPECT_EQ(j["crc32"], hex32(crc32_of(j["devices"].dump())));
  EXPECT_EQ(bytes.find(' '), std::string::npos);
}

TEST(Persist, MultiDeviceRoundTrip) {
  Registry reg;
  reg.register_device(speaker("A", "a", {t::device_image(64, 64, 1), t::device_image(80, 60, 2)}));
  reg.register_device(Registration{"L", "l", DeviceKind::Laptop, std::nullopt, {t::device_image(96, 64, 3)}});
  reg.register_device(Registration{"G", "g", DeviceKind::Generic, CapabilitySet{CommandName::PowerOn},
                                   {t::device_image(40, 40, 4), t::device_image(41, 40, 5), t::device_image(42, 40, 6)}});
  const auto path = temp_path("three.json");
  reg.persist(path);
  const auto back = Registry::load(path).list_devices();
  const auto orig = reg.list_devices();
  ASSERT_EQ(back.size(), orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    EXPECT_EQ(back[i].device_id, orig[i].device_id);
    EXPECT_EQ(back[i].name, orig[i].name);
    EXPECT_EQ(back[i].address, orig[i].address);
    EXPECT_EQ(back[i].kind, orig[i].kind);
    EXPECT_EQ(back[i].capabilities, orig[i].capabilities);
    EXPECT_EQ(back[i].created_at, orig[i].created_at);
    ASSERT_EQ(back[i].signatures.size(), orig[i].signatures.size());
    for (std::size_t s = 0; s < orig[i].signatures.size(); ++s) {
      EXPECT_EQ(back[i].signatures[s].dhash, orig[i].signatures[s].dhash);
      for (std::size_t k = 0; k < 1024; ++k)
        ASSERT_NEAR(back[i].signatures[s].templ[k], orig[i].signatures[s].templ[k], 1e-9);
    }
  }
}

TEST(Persist, TruncatedFileIsCorrupt) {
  Registry reg;
  reg.register_device(speaker("A", "a", {t::device_image(64, 64, 1)}));
  const std::string bytes = reg.serialize();
  EXPECT_EQ(kind_of([&] { Registry::deserialize(bytes.substr(0, bytes.size() / 2)); }), ErrorKind::CorruptRegistry);
}

TEST(Persist, AnySingleByteFlipIsCorrupt) {
  Registry reg;
  reg.register_device(speaker("A", "a", {t::device_image(64, 64, 1)}));
  const std::string bytes = reg.serialize();
  std::mt19937 rng(4);
  for (int i = 0; i < 300; ++i) {
    std::string bad = bytes;
    const auto pos = rng() % bad.size();
    bad[pos] = static_cast<char>(bad[pos] ^ (1 + rng() % 255));
    EXPECT_EQ(kind_of([&] { Registry::deserialize(bad); }), ErrorKind::CorruptRegistry) << "offset " << pos;
  }
}

TEST(Persist, WrongVersionIsCorrupt) {
  Json j = Json::parse(Registry{}.serialize());
  j["version"] = 2;
  EXPECT_EQ(kind_of([&] { Registry::deserialize(j.dump()); }), ErrorKind::CorruptRegistry);
}

TEST(Persist, MissingFileIsIoFailure) {
  EXPECT_EQ(kind_of([] { Registry::load("/nonexistent/registry.json"); }), ErrorKind::IoFailure);
}

TEST(Registry, ConcurrentReadersAndWriters) {
  Registry reg;
  std::vector<GrayFrame> imgs;
  for (int i = 0; i < 8; ++i) imgs.push_back(t::device_image(48, 48, 200 + i));
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { reg.register_device(speaker("d" + std::to_string(i), "a" + std::to_string(i), {imgs[i]})); });
    threads.emplace_back([&] {
      for (int k = 0; k < 50; ++k) (void)reg.list_devices();
    });
  }
  for (auto& th : threads) th.join();
  const auto all = reg.list_devices();
  EXPECT_EQ(all.size(), 8u);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1].created_at, all[i].created_at);
}

TEST(Pgm, RoundTripAndRejectsAscii) {
  const GrayFrame f = t::noise(33, 17, 2);
  EXPECT_EQ(decode_pgm(encode_pgm(f)), f);
  EXPECT_EQ(kind_of([] { decode_pgm("P2\n2 2\n255\n0 0 0 0"); }), ErrorKind::MalformedImage);
  EXPECT_EQ(kind_of([&] { decode_pgm(encode_pgm(f).substr(0, 40)); }), ErrorKind::MalformedImage);
}
