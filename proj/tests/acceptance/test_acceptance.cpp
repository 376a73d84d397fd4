// Acceptance suite: one test per criterion, each reported as a single
// PASS/FAIL line by the listener in main().

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "arcon/recognizer/scan.hpp"
#include "support/cli.hpp"
#include "support/envelopes.hpp"
#include "support/harness.hpp"

using namespace arcon;
using namespace arcon::testing;

namespace {

// Pinned tolerances and budgets.
constexpr double kMinIoU = 0.9;
constexpr double kScoreTol = 1e-9;
constexpr double kTemplateTol = 1e-9;
constexpr double kCapacityBudgetS = 5.0;
constexpr double kScanBudgetS = 2.0;
constexpr int kOracleFrames = 100;
constexpr int kCodecEnvelopes = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Unreachable;
}

std::vector<Event> of_kind(const std::vector<Event>& events, EventKind k) {
  std::vector<Event> out;
  std::copy_if(events.begin(), events.end(), std::back_inserter(out), [&](const Event& e) { return e.kind == k; });
  return out;
}

std::string state_bytes(const DeviceState& s) { return canonical_dump(to_json(s)); }

}  // namespace

// ---------------------------------------------------------------------------

TEST(Acceptance, Criterion1_PairingCapacity) {
  HubHarness h;
  ASSERT_EQ(h.cfg.net.max_slaves, 7);
  std::vector<std::string> addrs;
  for (int i = 0; i < 8; ++i) {
    addrs.push_back("dev" + std::to_string(i));
    h.register_device(addrs.back(), DeviceKind::Generic, 100 + i);
  }
  const auto t0 = Clock::now();
  // All eight sit 2 m from the hub.
  std::vector<agents::AgentRuntime*> agents;
  for (int i = 0; i < 7; ++i) {
    const double a = i * 0.8;
    agents.push_back(&h.start_agent(addrs[i], DeviceKind::Generic, 2.0 * std::cos(a), 2.0 * std::sin(a)));
  }
  for (int i = 0; i < 7; ++i) ASSERT_TRUE(agents[i]->wait_paired(kCapacityBudgetS) && h.wait_active(addrs[i]));
  EXPECT_EQ(h.hub->active_sessions(), 7);

  auto& eighth = h.start_agent(addrs[7], DeviceKind::Generic, -2.0, 0.0);
  ASSERT_TRUE(eighth.wait_rejected(kCapacityBudgetS));
  EXPECT_EQ(eighth.last_reject(), "capacity");
  EXPECT_EQ(h.hub->last_reject(addrs[7]), "capacity");

  // The seven sessions persist.
  std::this_thread::sleep_for(std::chrono::milliseconds(500));
  EXPECT_EQ(h.hub->active_sessions(), 7);
  EXPECT_FALSE(eighth.paired());
  for (int i = 0; i < 7; ++i) {
    EXPECT_TRUE(agents[i]->paired()) << addrs[i];
    EXPECT_EQ(h.hub->session_states().at(addrs[i]), "Active") << addrs[i];
  }
  const double elapsed = seconds_since(t0);
  std::printf("  capacity: 7 active, 8th rejected, %.3f s\n", elapsed);
  EXPECT_LT(elapsed, kCapacityBudgetS);
}

TEST(Acceptance, Criterion2_RangeGate) {
  HubHarness h([](hub::HubConfig& c) { c.tick_s = 0.1; });
  const hub::HubConfig& cfg = h.cfg;
  ASSERT_EQ(cfg.net.max_range_m, 8.0);
  h.register_device("edge", DeviceKind::Speaker, 200);
  h.register_device("beyond", DeviceKind::Speaker, 201);

  auto& edge = h.start_agent("edge", DeviceKind::Speaker, 8.0, 0.0);
  ASSERT_TRUE(edge.wait_paired(2.0) && h.wait_active("edge"));

  auto& beyond = h.start_agent("beyond", DeviceKind::Speaker, 8.01, 0.0);
  ASSERT_TRUE(beyond.wait_rejected(2.0));
  EXPECT_EQ(beyond.last_reject(), "range");
  EXPECT_FALSE(beyond.paired());

  const auto t0 = Clock::now();
  h.hub->move_endpoint("edge", {10.0, 0.0});
  ASSERT_TRUE(wait_until([&] { return h.hub->session_states().at("edge") == "Closed"; }, cfg.net.heartbeat_timeout_s));
  const double closed_after = seconds_since(t0);
  std::printf("  range: 8.0 m paired, 8.01 m rejected, closed %.3f s after moving to 10 m (limit %.1f s)\n",
              closed_after, cfg.net.heartbeat_timeout_s);
  EXPECT_LE(closed_after, cfg.net.heartbeat_timeout_s);
  EXPECT_TRUE(edge.wait_unpaired(1.0));
}

TEST(Acceptance, Criterion3_RecognitionCapAndAccuracy) {
  HubHarness h;
  struct Planted {
    std::string id;
    GrayFrame photo;
    Rect box;
    double oracle = 0.0;
  };
  const int sides[] = {32, 40, 48, 32, 40, 48};
  const int amps[] = {2, 6, 10, 14, 18, 24};
  const Rect spots[] = {{40, 40, 0, 0}, {200, 40, 0, 0}, {400, 48, 0, 0},
                        {72, 240, 0, 0}, {264, 248, 0, 0}, {456, 256, 0, 0}};
  Compositor comp{background(640, 480, 300), {}};
  std::vector<Planted> planted;
  for (int i = 0; i < 6; ++i) {
    registry::Registration r;
    r.name = "dev" + std::to_string(i);
    r.address = r.name;
    r.kind = DeviceKind::Generic;
    r.images = {device_image(sides[i], sides[i], 310 + i)};
    const auto rec = h.hub->register_device(r);
    comp.plant(rec.device_id, jitter(r.images[0], amps[i], 320 + i), spots[i].x, spots[i].y);
    planted.push_back({rec.device_id, r.images[0], comp.plants.back().box});
  }
  // Oracle score of each device at its own planted box.
  for (auto& p : planted) {
    const auto templ = resample_oracle(p.photo, {0, 0, p.photo.width, p.photo.height}, 32, 32);
    p.oracle = ncc_oracle(templ, resample_oracle(comp.frame, p.box, 32, 32));
  }
  auto ranked = planted;
  std::sort(ranked.begin(), ranked.end(), [](const Planted& a, const Planted& b) { return a.oracle > b.oracle; });
  for (std::size_t i = 1; i < ranked.size(); ++i) ASSERT_GT(ranked[i - 1].oracle, ranked[i].oracle);
  // All six clear the threshold, so the cap is what drops one.
  ASSERT_GE(ranked.back().oracle, h.cfg.scan.threshold);

  const auto t0 = Clock::now();
  const auto recs = h.hub->scan(comp.frame);
  const double elapsed = seconds_since(t0);

  ASSERT_EQ(recs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& want = ranked[i];
    EXPECT_EQ(recs[i].device_id, want.id) << "rank " << i;
    const double overlap = iou(recs[i].best.bbox, want.box);
    EXPECT_GE(overlap, kMinIoU) << want.id;
    EXPECT_NEAR(recs[i].best.score, want.oracle, kScoreTol) << want.id;
  }
  std::set<std::string> seen;
  for (const auto& r : recs) seen.insert(r.device_id);
  EXPECT_EQ(seen.count(ranked.back().id), 0u);
  std::printf("  recognition: 5 of 6 reported, dropped score %.4f, scan %.3f s (budget %.1f s)\n",
              ranked.back().oracle, elapsed, kScanBudgetS);
  EXPECT_LT(elapsed, kScanBudgetS);
}

TEST(Acceptance, Criterion4_OracleEquivalence) {
  std::mt19937 rng(4004);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const double scales[] = {0.75, 1.0, 1.25};
  int matched = 0;
  for (int n = 0; n < kOracleFrames; ++n) {
    const double scale = scales[uni(0, 2)];
    const int side = recognizer::window_side(scale);
    const int w = uni(side, 64), h = uni(side, 64);
    const std::uint32_t seed = 5000 + n;
    const int ps = uni(24, 64);
    const GrayFrame photo = device_image(ps, ps, seed);

    GrayFrame frame = jitter(background(w, h, seed), 12, seed + 1);
    if (n % 10 != 0) paste(frame, jitter(device_image(side, side, seed), uni(0, 20), seed + 2), uni(0, w - side), uni(0, h - side));

    registry::DeviceRecord rec;
    rec.device_id = "d";
    rec.signatures = {registry::make_signature(photo)};
    recognizer::ScanConfig cfg;
    cfg.scales = {scale};
    cfg.stride = 1;
    cfg.threshold = 1e-6;

    const OracleHit oracle = exhaustive_match(frame, photo, side);
    const auto hit = recognizer::match_device(frame, rec, cfg);
    if (oracle.score < cfg.threshold) {
      EXPECT_FALSE(hit.has_value()) << "frame " << n;
      continue;
    }
    ASSERT_TRUE(hit.has_value()) << "frame " << n;
    EXPECT_EQ(hit->bbox.x, oracle.x) << "frame " << n;
    EXPECT_EQ(hit->bbox.y, oracle.y) << "frame " << n;
    EXPECT_NEAR(hit->score, oracle.score, kScoreTol) << "frame " << n;
    ++matched;
  }
  std::printf("  oracle: %d frames, %d with a positive best window\n", kOracleFrames, matched);
  EXPECT_GE(matched, kOracleFrames * 9 / 10);
}

TEST(Acceptance, Criterion5_CodecBijection) {
  using namespace pairnet;
  std::mt19937 rng(5005);
  for (int i = 0; i < kCodecEnvelopes; ++i) {
    const Envelope e = random_envelope(rng);
    const Decoded d = decode(encode(e));
    ASSERT_EQ(d.envelope, e) << "envelope " << i;
  }
  auto framed = [](std::string_view payload) {
    const auto n = static_cast<std::uint32_t>(payload.size());
    return std::string{static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                       static_cast<char>(n)} +
           std::string(payload);
  };
  const std::string oversize("\x00\x10\x00\x01", 4);  // 1 MiB + 1
  const std::string good = encode(Envelope{MsgType::CMD, 3, Json{{"x", 1}}});
  const std::string truncated = good.substr(0, good.size() - 1);
  const std::string bad_utf8 = framed("{\"t\":\"EVENT\",\"body\":{\"k\":\"\xC3\x28\"}}");

  const ErrorKind k_over = kind_of([&] { decode(oversize); });
  const ErrorKind k_trunc = kind_of([&] { decode(truncated); });
  const ErrorKind k_utf8 = kind_of([&] { decode(bad_utf8); });
  EXPECT_EQ(k_over, ErrorKind::FrameTooLarge);
  EXPECT_EQ(k_trunc, ErrorKind::Truncated);
  EXPECT_EQ(k_utf8, ErrorKind::MalformedPayload);
  EXPECT_EQ(std::set<ErrorKind>({k_over, k_trunc, k_utf8}).size(), 3u);
  // A partial frame is not an error for the incremental decoder.
  EXPECT_FALSE(try_decode(truncated).has_value());
}

TEST(Acceptance, Criterion6_EndToEndVolume) {
  TempDir dir;
  registry::Registry().persist(dir.path / "registry.json");
  const int api_port = free_port();
  const int net_port = free_port();
  const std::string hub_addr = "127.0.0.1:" + std::to_string(api_port);
  {
    std::ofstream(dir.path / "hub.json") << canonical_dump(Json{{"registry_path", "registry.json"},
                                                              {"api_listen", hub_addr},
                                                              {"pairnet_listen", "127.0.0.1:" + std::to_string(net_port)}});
    std::ofstream(dir.path / "speaker.json")
        << canonical_dump(Json{{"kind", "Speaker"},
                               {"address", "living-room-speaker"},
                               {"hub", "127.0.0.1:" + std::to_string(net_port)},
                               {"position", {{"x_m", 3.0}, {"y_m", 0.0}}}});
  }
  const std::string log = (dir.path / "processes.log").string();
  CliProcess serve({"serve", (dir.path / "hub.json").string()}, log);
  ASSERT_TRUE(serve.running());
  ASSERT_TRUE(wait_until([&] { return run_cli({"--hub", hub_addr, "devices"}).exit_code == 0; }, 10.0));
  CliProcess agent({"agent", (dir.path / "speaker.json").string()}, log);
  ASSERT_TRUE(agent.running());

  write_pgm(dir.path / "speaker.pgm", photo(600));
  auto r = run_cli({"--hub", hub_addr, "register", "--name", "Living room speaker", "--kind", "Speaker", "--address",
                    "living-room-speaker", (dir.path / "speaker.pgm").string()});
  ASSERT_EQ(r.exit_code, 0);
  const std::string id = r.lines().at(0);
  ASSERT_TRUE(wait_until([&] { return run_cli({"--hub", hub_addr, "status", id}).exit_code == 0; }, 10.0))
      << "speaker never paired";

  r = run_cli({"--hub", hub_addr, "control", id, "set-volume", "75"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "ok volume=75\n");

  r = run_cli({"--hub", hub_addr, "status", id});
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_EQ(Json::parse(r.out)["volume"], 75);

  r = run_cli({"--hub", hub_addr, "events", "--device", id});
  ASSERT_EQ(r.exit_code, 0);
  std::vector<Json> volume;
  for (const auto& line : r.lines()) {
    const Json e = Json::parse(line);
    if (e["kind"] == "VolumeChanged") volume.push_back(e);
  }
  ASSERT_EQ(volume.size(), 1u);
  EXPECT_EQ(volume[0]["payload"], (Json{{"volume", 75}}));
  EXPECT_EQ(volume[0]["device_id"], id);

  EXPECT_EQ(agent.terminate(), 0);
  EXPECT_EQ(serve.terminate(), 0);
}

TEST(Acceptance, Criterion7_PoweredOffGatingAndReplay) {
  HubHarness h;
  const auto spk = h.register_device("spk", DeviceKind::Speaker, 700);
  const auto lap = h.register_device("lap", DeviceKind::Laptop, 701);
  auto& spk_agent = h.start_agent("spk", DeviceKind::Speaker, 1.0);
  auto& lap_agent = h.start_agent("lap", DeviceKind::Laptop, 1.0);
  ASSERT_TRUE(spk_agent.wait_paired(2.0) && h.wait_active("spk"));
  ASSERT_TRUE(lap_agent.wait_paired(2.0) && h.wait_active("lap"));

  h.hub->dispatch(spk, cmd::PowerOff{});
  const DeviceState before = h.hub->snapshot(spk);
  EXPECT_EQ(kind_of([&] { h.hub->dispatch(spk, cmd::SetVolume{75}); }), ErrorKind::DevicePoweredOff);
  EXPECT_EQ(state_bytes(h.hub->snapshot(spk)), state_bytes(before));
  EXPECT_EQ(state_bytes(spk_agent.state()), state_bytes(before));
  h.hub->dispatch(spk, cmd::PowerOn{});

  // Random logs, including rejected commands, run live and replayed offline.
  std::mt19937 rng(7007);
  auto random_command = [&]() -> Command {
    switch (rng() % 7) {
      case 0: return cmd::PowerOn{};
      case 1: return cmd::PowerOff{};
      case 2: return cmd::GetStatus{};
      case 3: return cmd::SetVolume{static_cast<int>(rng() % 131) - 15};
      case 4: return cmd::PlayTrack{"track-" + std::to_string(rng() % 9)};
      case 5: return cmd::StopTrack{};
      default: return cmd::MoveCursor{static_cast<int>(rng() % 801) - 400, static_cast<int>(rng() % 801) - 400};
    }
  };
  struct Live {
    std::string id;
    DeviceKind kind;
    agents::AgentRuntime* agent;
  };
  int rejected = 0;
  for (const Live& d : {Live{spk, DeviceKind::Speaker, &spk_agent}, Live{lap, DeviceKind::Laptop, &lap_agent}}) {
    const DeviceState initial = d.agent->state();
    std::vector<Command> log;
    for (int i = 0; i < 80; ++i) {
      log.push_back(random_command());
      try {
        h.hub->dispatch(d.id, log.back());
      } catch (const Error&) {
        ++rejected;
      }
    }
    const DeviceState replayed = agents::replay(d.kind, initial, log);
    EXPECT_EQ(state_bytes(replayed), state_bytes(d.agent->state())) << to_string(d.kind);
    EXPECT_EQ(state_bytes(replayed), state_bytes(h.hub->snapshot(d.id))) << to_string(d.kind);
    EXPECT_EQ(state_bytes(agents::replay(d.kind, initial, log)), state_bytes(replayed));
  }
  std::printf("  replay: 160 live commands (%d rejected) reproduced on both devices\n", rejected);
  EXPECT_GT(rejected, 0);
}

TEST(Acceptance, Criterion8_TransferMonotonicity) {
  HubHarness h;
  ASSERT_EQ(h.cfg.chunk_bytes, 256);
  const auto src = h.register_device("lap", DeviceKind::Laptop, 800);
  const auto dst = h.register_device("spk", DeviceKind::Speaker, 801);
  ASSERT_TRUE(h.pair_agent("lap", DeviceKind::Laptop, 1.0));
  auto& dst_agent = h.start_agent("spk", DeviceKind::Speaker, 1.0);
  ASSERT_TRUE(dst_agent.wait_paired(2.0) && h.wait_active("spk"));

  auto progress_of = [&](const std::string& job_id) {
    std::vector<Json> out;
    for (const auto& e : of_kind(h.hub->events().history(dst), EventKind::TransferProgress)) {
      if (e.payload["job_id"] == job_id) out.push_back(e.payload);
    }
    return out;
  };
  auto settled = [&](const std::string& job_id) {
    return wait_until(
        [&] {
          const auto p = progress_of(job_id);
          return !p.empty() && p.back()["state"] != "Running";
        },
        5.0);
  };

  const auto ok = h.hub->start_transfer(src, dst, "song.mp3", 1000);
  ASSERT_TRUE(settled(ok.job_id));
  const auto p = progress_of(ok.job_id);
  std::vector<std::int64_t> sent;
  for (const auto& e : p) sent.push_back(e["sent_bytes"]);
  EXPECT_EQ(sent, (std::vector<std::int64_t>{256, 512, 768, 1000}));
  EXPECT_EQ(p.back()["state"], "Done");
  EXPECT_EQ(h.hub->find_transfer(ok.job_id)->state, hub::TransferState::Done);

  // Destination dies when the third chunk arrives.
  dst_agent.kill_on_chunk(2);
  const auto bad = h.hub->start_transfer(src, dst, "song.mp3", 1000);
  ASSERT_TRUE(settled(bad.job_id));
  const auto q = progress_of(bad.job_id);
  ASSERT_FALSE(q.empty());
  EXPECT_EQ(q.back()["state"], "Failed");
  std::int64_t prev = 0;
  for (const auto& e : q) {
    const std::int64_t s = e["sent_bytes"];
    EXPECT_GE(s, prev);
    EXPECT_EQ(s % 256, 0);
    prev = s;
  }
  const auto job = h.hub->find_transfer(bad.job_id);
  EXPECT_EQ(job->state, hub::TransferState::Failed);
  EXPECT_EQ(job->sent_bytes, 512);
  EXPECT_EQ(q.back()["sent_bytes"], 512);
  std::printf("  transfer: 256/512/768/1000 Done; killed destination failed at %lld\n",
              static_cast<long long>(job->sent_bytes));
}

TEST(Acceptance, Criterion9_RegistryRoundTrip) {
  TempDir dir;
  registry::Registry reg;
  reg.register_device({"Speaker", "spk", DeviceKind::Speaker, std::nullopt,
                       {device_image(64, 64, 900), device_image(80, 60, 901)}});
  reg.register_device({"Laptop", "lap", DeviceKind::Laptop, std::nullopt,
                       {device_image(96, 64, 902), device_image(48, 48, 903), device_image(50, 70, 904)}});
  reg.register_device({"Lamp", "lamp", DeviceKind::Generic, CapabilitySet{CommandName::PowerOn, CommandName::PowerOff},
                       {device_image(40, 40, 905), device_image(44, 40, 906)}});
  const auto path = dir.path / "registry.json";
  reg.persist(path);

  const auto orig = reg.list_devices();
  const auto back = registry::Registry::load(path).list_devices();
  ASSERT_EQ(back.size(), 3u);
  double worst = 0.0;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    EXPECT_EQ(back[i].device_id, orig[i].device_id);
    EXPECT_EQ(back[i].name, orig[i].name);
    EXPECT_EQ(back[i].address, orig[i].address);
    EXPECT_EQ(back[i].kind, orig[i].kind);
    EXPECT_EQ(back[i].capabilities, orig[i].capabilities);
    ASSERT_EQ(back[i].signatures.size(), orig[i].signatures.size());
    for (std::size_t s = 0; s < orig[i].signatures.size(); ++s) {
      EXPECT_EQ(back[i].signatures[s].dhash, orig[i].signatures[s].dhash);
      for (std::size_t k = 0; k < orig[i].signatures[s].templ.size(); ++k) {
        worst = std::max(worst, std::fabs(back[i].signatures[s].templ[k] - orig[i].signatures[s].templ[k]));
      }
    }
  }
  EXPECT_LE(worst, kTemplateTol);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::mt19937 rng(9009);
  int corrupt = 0;
  const int trials = 50;
  for (int i = 0; i < trials; ++i) {
    std::string bad = bytes;
    const auto pos = rng() % bad.size();
    bad[pos] = static_cast<char>(bad[pos] ^ (1 + rng() % 255));
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bad;
    try {
      registry::Registry::load(path);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::CorruptRegistry) ++corrupt;
    }
  }
  std::printf("  registry: max template error %.3g; %d/%d corrupted files rejected\n", worst, corrupt, trials);
  EXPECT_EQ(corrupt, trials);
}

// ---------------------------------------------------------------------------

namespace {

class CriterionReporter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    const std::string name = info.name();
    const auto us = name.find('_');
    const std::string label = name.substr(0, us);
    std::string what = us == std::string::npos ? "" : name.substr(us + 1);
    const bool ok = info.result()->Passed();
    std::printf("%s %-11s %-36s %7.3f s\n", ok ? "PASS" : "FAIL", label.c_str(), what.c_str(),
                info.result()->elapsed_time() / 1000.0);
    std::fflush(stdout);
  }
};

}  // namespace

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new CriterionReporter);
  return RUN_ALL_TESTS();
}
