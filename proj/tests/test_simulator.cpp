#include <doctest.h>

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gaitspeed/engine.hpp"
#include "gaitspeed/simulator.hpp"

using namespace gaitspeed;
using namespace std::chrono_literals;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("gaitspeed_" + tag + "_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool unimodal(const Trace& t) {
  std::size_t i = 1;
  while (i < t.size() && t[i].rssi_dbm >= t[i - 1].rssi_dbm) ++i;
  while (i < t.size() && t[i].rssi_dbm <= t[i - 1].rssi_dbm) ++i;
  return i == t.size();
}

}  // namespace

TEST_CASE("path model") {
  CHECK(rssi_model(1.0) == doctest::Approx(-45.0));
  CHECK(rssi_model(0.8) == doctest::Approx(-43.0618).epsilon(1e-5));
  CHECK(rssi_model(0.3) == rssi_model(0.8));
  CHECK(rssi_model(0.0) == rssi_model(0.8));
  CHECK(rssi_model(4.0) == doctest::Approx(-57.0412).epsilon(1e-5));
  CHECK_THROWS_AS(rssi_model(-1.0), std::invalid_argument);
}

TEST_CASE("antenna coupling pattern") {
  CHECK(coupling_gain_db(0.0, 0.6, 55.0) == doctest::Approx(0.0));
  const double half = 27.5 * 3.141592653589793 / 180.0;
  CHECK(coupling_gain_db(0.6 * std::tan(half), 0.6, 55.0) == doctest::Approx(-3.0103).epsilon(1e-4));
  CHECK(coupling_gain_db(-0.6 * std::tan(half), 0.6, 55.0) == doctest::Approx(-3.0103).epsilon(1e-4));
  CHECK(coupling_gain_db(100.0, 0.6, 55.0) == doctest::Approx(-30.0));
  CHECK(coupling_gain_db(0.3, 0.6, 55.0) > coupling_gain_db(0.6, 0.6, 55.0));
}

TEST_CASE("sample counts per antenna at walking speed") {
  DetectionParams params;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    WalkProfile p;
    p.speed_mps = 1.0;
    p.seed = seed;
    auto w = generate_walk(p, params);
    CHECK(w.entry.size() >= 50);
    CHECK(w.entry.size() <= 150);
    CHECK(w.exit.size() >= 50);
    CHECK(w.exit.size() <= 150);
    CHECK_FALSE(w.sparse_entry);
  }
}

TEST_CASE("ground truth spacing is distance over speed") {
  for (double v : {0.6, 0.751, 1.0, 1.37, 2.5}) {
    WalkProfile p;
    p.speed_mps = v;
    p.false_peaks = {{0.5, 1.0, -50.0}};
    DetectionParams params;
    params.distance_m = 4.0;
    auto w = generate_walk(p, params);
    CHECK(w.truth.true_speed_mps == v);
    CHECK(w.truth.true_t2_us - w.truth.true_t1_us == doctest::Approx(4.0 / v * 1e6).epsilon(1e-12));
    CHECK(w.truth.true_t1_us == doctest::Approx((2.5 + 2.0 / v) * 1e6));
  }
}

TEST_CASE("noiseless clinic-speed walk through the engine") {
  WalkProfile p;
  p.speed_mps = 0.751;
  p.noise_sigma_dbm = 0.0;
  EngineOptions o;
  Engine e(o);
  std::mutex m;
  std::condition_variable cv;
  std::vector<TrialResult> out;
  e.add_sink([&](const CompletedTrial& t) {
    std::lock_guard lk(m);
    out.push_back(t.result);
    cv.notify_all();
  });
  const auto epc = simulated_epc(0);
  e.register_tag("Tag1", epc);
  for (const auto& r : walk_reads(generate_walk(p, o.params), epc)) e.route_read(r);
  std::unique_lock lk(m);
  REQUIRE(cv.wait_for(lk, 5s, [&] { return !out.empty(); }));
  CHECK(out[0].classification == Classification::success);
  CHECK(std::abs(out[0].speed_mps - 0.751) / 0.751 < 0.01);
}

TEST_CASE("false peaks precede the detected entry edge") {
  DetectionParams params;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    WalkProfile p;
    p.seed = seed;
    p.false_peaks = {{0.5, 1.0, -50.0}, {2.5, 0.8, -48.0}};
    auto w = generate_walk(p, params);
    const std::int64_t last_false_peak_end = 3'300'000;
    const auto cutoff = w.exit.front().timestamp_us;
    std::size_t false_samples = 0;
    for (const auto& s : w.entry) false_samples += s.timestamp_us <= last_false_peak_end;
    CHECK(false_samples > 10);
    auto e = detect_right_edge_reversed(truncate_before(w.entry, cutoff), params.w1, params.tau1);
    REQUIRE(e);
    CHECK(e->edge_timestamp_us > last_false_peak_end);
  }
}

TEST_CASE("saturation region scales inversely with speed") {
  for (double v : {0.4, 0.6, 0.8, 1.0, 1.2, 1.5}) {
    WalkProfile fast;
    fast.speed_mps = v;
    WalkProfile slow = fast;
    slow.speed_mps = v / 2.0;
    const auto nf = saturated_sample_count(fast, 0.0, 4.0);
    const auto ns = saturated_sample_count(slow, 0.0, 4.0);
    CHECK(nf > 0);
    CHECK(std::abs(static_cast<long>(ns) - 2 * static_cast<long>(nf)) <= 1);
  }
}

TEST_CASE("noiseless traces are unimodal") {
  DetectionParams params;
  for (double v : {0.5, 0.8, 1.1, 1.5, 2.2}) {
    for (double lateral : {0.45, 0.6, 0.75}) {
      WalkProfile p;
      p.speed_mps = v;
      p.lateral_offset_m = lateral;
      p.noise_sigma_dbm = 0.0;
      auto w = generate_walk(p, params);
      CHECK(unimodal(w.entry));
      CHECK(unimodal(w.exit));
      p.rssi_step_dbm = 0.0;
      w = generate_walk(p, params);
      CHECK(unimodal(w.entry));
      CHECK(unimodal(w.exit));
    }
  }
}

TEST_CASE("walks are reproducible from the seed") {
  WalkProfile p;
  p.seed = 1234;
  p.false_peaks = {{0.5, 1.0, -50.0}};
  DetectionParams params;
  auto a = generate_walk(p, params);
  auto b = generate_walk(p, params);
  CHECK(a.entry == b.entry);
  CHECK(a.exit == b.exit);
  p.seed = 1235;
  CHECK(generate_walk(p, params).entry != a.entry);
}

TEST_CASE("readings below the floor are not reported") {
  WalkProfile p;
  p.floor_dbm = -60.0;
  auto w = generate_walk(p, {});
  for (const auto& s : w.entry) CHECK(s.rssi_dbm >= -60.0);
  WalkProfile sparse;
  sparse.floor_dbm = -20.0;
  auto none = generate_walk(sparse, {});
  CHECK(none.entry.empty());
  CHECK(none.sparse_entry);
}

TEST_CASE("profile validation") {
  WalkProfile p;
  p.speed_mps = 0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = {};
  p.noise_sigma_dbm = -1;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = {};
  p.sample_rate_hz = 0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = {};
  p.false_peaks = {{0.0, 0.0, -50.0}};
  CHECK_THROWS_AS(generate_walk(p, {}), std::invalid_argument);
}

TEST_CASE("capture files round-trip") {
  TempDir dir("capture");
  WalkProfile p;
  p.seed = 9;
  p.false_peaks = {{0.5, 1.0, -52.0}};
  DetectionParams params;
  auto w = generate_walk(p, params);
  Capture c;
  c.header = CaptureHeader{w.truth, p, params.distance_m, simulated_epc(3)};
  c.reads = walk_reads(w, simulated_epc(3));
  const auto path = dir.path / "walk.jsonl";
  write_capture(path, c);
  auto back = read_capture(path);
  REQUIRE(back.header);
  CHECK(back.header->truth == w.truth);
  CHECK(back.header->profile == p);
  CHECK(back.header->epc == simulated_epc(3));
  CHECK(back.reads == c.reads);
  auto [entry, exit] = split_traces(back.reads, {{1, AntennaRole::entry}, {2, AntennaRole::exit}});
  CHECK(entry == w.entry);
  CHECK(exit == w.exit);

  std::ofstream(dir.path / "bad.jsonl") << R"({"epc":"E28011700000000000000001","antennaPort":1,"timestampUs":5,"rssi":-50})" << "\n"
                                        << R"({"epc":"E28011700000000000000001","antennaPort":1,"timestampUs":4,"rssi":-50})" << "\n";
  CHECK_THROWS_AS(read_capture(dir.path / "bad.jsonl"), std::runtime_error);
  std::ofstream(dir.path / "late.jsonl") << R"({"epc":"E28011700000000000000001","antennaPort":1,"timestampUs":5,"rssi":-50})" << "\n"
                                         << slurp(path).substr(0, slurp(path).find('\n') + 1);
  CHECK_THROWS_AS(read_capture(dir.path / "late.jsonl"), std::runtime_error);
  CHECK_THROWS_AS(read_capture(dir.path / "missing.jsonl"), std::runtime_error);
}

TEST_CASE("corpus regeneration is byte-identical") {
  TempDir a("corpus_a"), b("corpus_b");
  CorpusOptions o;
  auto ma = generate_corpus(o, a.path);
  generate_corpus(o, b.path);
  CHECK(ma.walks.size() == 26);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(a.path)) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(b.path / entry.path().filename()));
  }
  CHECK(files == 27);
  auto loaded = load_corpus(a.path);
  auto [mem_manifest, mem] = build_corpus(o);
  REQUIRE(loaded.size() == mem.size());
  for (std::size_t i = 0; i < mem.size(); ++i) {
    CHECK(loaded[i].entry == mem[i].entry);
    CHECK(loaded[i].exit == mem[i].exit);
    CHECK(loaded[i].meta.truth == mem[i].meta.truth);
    CHECK(loaded[i].meta.epc == mem[i].meta.epc);
  }
  o.seed = 8;
  TempDir c("corpus_c");
  generate_corpus(o, c.path);
  CHECK(slurp(a.path / "manifest.json") != slurp(c.path / "manifest.json"));
}

TEST_CASE("degenerate speed range") {
  CorpusOptions o;
  o.n = 1;
  o.speed_min_mps = o.speed_max_mps = 1.0;
  auto [m, walks] = build_corpus(o);
  REQUIRE(walks.size() == 1);
  CHECK(m.walks[0].truth.true_speed_mps == 1.0);
  CHECK(m.walks[0].profile.speed_mps == 1.0);
}

TEST_CASE("manifest crossing deltas equal distance over speed") {
  CorpusOptions o;
  o.n = 60;
  o.distance_m = 3.5;
  auto [m, walks] = build_corpus(o);
  for (const auto& w : m.walks) {
    CHECK(w.truth.true_t2_us - w.truth.true_t1_us ==
          doctest::Approx(o.distance_m / w.truth.true_speed_mps * 1e6).epsilon(1e-12));
    CHECK(w.truth.true_speed_mps >= o.speed_min_mps);
    CHECK(w.truth.true_speed_mps <= o.speed_max_mps);
    CHECK(w.profile.false_peaks.size() <= 3);
  }
}

TEST_CASE("mixed-quality corpora") {
  CorpusOptions o;
  o.n = 200;
  o.failure_fraction = 0.1;
  o.running_fraction = 0.1;
  auto [m, walks] = build_corpus(o);
  std::size_t failures = 0, running = 0;
  for (const auto& w : walks) {
    if (w.meta.kind == WalkKind::failure) {
      ++failures;
      CHECK(w.entry.empty());
    }
    if (w.meta.kind == WalkKind::running) {
      ++running;
      CHECK(w.meta.truth.true_speed_mps == 2.5);
    }
  }
  CHECK(failures > 5);
  CHECK(failures < 40);
  CHECK(running > 5);
  CHECK(running < 40);
  CHECK_THROWS_AS(build_corpus(CorpusOptions{.n = 0}), std::invalid_argument);
  CHECK_THROWS_AS(build_corpus(CorpusOptions{.failure_fraction = 0.7, .running_fraction = 0.7}),
                  std::invalid_argument);
}

TEST_CASE("simulated epcs are valid and distinct") {
  CHECK(simulated_epc(0) == "E28011700000000000000001");
  CHECK(is_valid_epc(simulated_epc(12345)));
  CHECK(simulated_epc(1) != simulated_epc(2));
}
