#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include <boost/asio.hpp>

#include "gaitspeed/gateway.hpp"
#include "gaitspeed/replay.hpp"
#include "gaitspeed/simulator.hpp"

using namespace gaitspeed;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

constexpr const char* kEpc = "E2801160600002040000CC01";

std::vector<TagRead> uniform_reads(std::size_t n, std::int64_t span_us) {
  std::vector<TagRead> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({kEpc, 1 + static_cast<int>(i % 2),
                   static_cast<std::int64_t>(i) * span_us / static_cast<std::int64_t>(n - 1), -50.0});
  return out;
}

std::size_t distinct_windows(const std::vector<TagRead>& reads, std::int64_t w) {
  std::set<std::int64_t> s;
  for (const auto& r : reads) s.insert((r.timestamp_us - reads.front().timestamp_us) / w);
  return s.size();
}

unsigned short closed_port() {
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::acceptor a(ioc, {boost::asio::ip::make_address("127.0.0.1"), 0});
  return a.local_endpoint().port();
}

struct Server {
  explicit Server(const DetectionParams& params) : engine([&] {
    EngineOptions o;
    o.params = params;
    return o;
  }()) {
    static std::mt19937_64 rng{std::random_device{}()};
    dir = fs::temp_directory_path() / ("gaitspeed-replay-" + std::to_string(rng()));
    fs::create_directories(dir);
    log = std::make_unique<TrialLog>(dir / "trials.jsonl");
    ServiceConfig c;
    c.server.host = "127.0.0.1";
    c.server.port = 0;
    gw = std::make_unique<Gateway>(engine, *log, c);
    gw->start(2);
    engine.register_tag("walker", kEpc);
  }
  ~Server() {
    gw.reset();
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(gw->port()); }

  fs::path dir;
  Engine engine;
  std::unique_ptr<TrialLog> log;
  std::unique_ptr<Gateway> gw;
};

}  // namespace

TEST_CASE("batching follows timestamp windows") {
  auto reads = uniform_reads(200, 5'300'000);
  for (std::int64_t w : {100'000, 250'000, 400'000, 1'000'000}) {
    auto batches = make_batches(reads, w);
    CHECK(batches.size() == distinct_windows(reads, w));
    std::size_t total = 0;
    std::int64_t prev = -1;
    for (const auto& b : batches) {
      REQUIRE_FALSE(b.empty());
      auto idx = (b.front().timestamp_us - reads.front().timestamp_us) / w;
      CHECK(idx > prev);
      CHECK((b.back().timestamp_us - reads.front().timestamp_us) / w == idx);
      prev = idx;
      total += b.size();
    }
    CHECK(total == reads.size());
  }
  CHECK(make_batches(reads, 100'000).size() == 54);
  auto coarse = make_batches(reads, 400'000).size();
  CHECK(coarse >= 10);
  CHECK(coarse <= 20);
}

TEST_CASE("batching edge cases") {
  CHECK(make_batches({}, 100'000).empty());
  auto reads = uniform_reads(10, 900'000);
  CHECK_THROWS_AS(make_batches(reads, 0), std::invalid_argument);
  std::swap(reads[2], reads[7]);
  CHECK_THROWS_AS(make_batches(reads, 100'000), std::invalid_argument);

  std::vector<TagRead> gap{{kEpc, 1, 0, -50}, {kEpc, 1, 50'000, -50}, {kEpc, 2, 950'000, -50}};
  auto b = make_batches(gap, 100'000);
  REQUIRE(b.size() == 2);
  CHECK(b[0].size() == 2);
  CHECK(b[1].size() == 1);
}

TEST_CASE("replay into a live gateway matches the offline reference") {
  const DetectionParams params{14, 14, 1.0, 1.0, 4.0};
  WalkProfile p;
  p.speed_mps = 1.2;
  p.seed = 11;
  auto walk = generate_walk(p, params);
  auto reads = walk_reads(walk, kEpc);
  auto expected = offline_reference_edges(walk.entry, walk.exit, params);

  std::vector<TrialResult> outcomes;
  for (double scale : {0.0, 0.1}) {
    Server s(params);
    ReplayOptions o;
    o.endpoint = s.endpoint();
    o.time_scale = scale;
    auto t0 = std::chrono::steady_clock::now();
    auto report = replay(reads, o);
    auto elapsed = std::chrono::steady_clock::now() - t0;

    CHECK_FALSE(report.aborted);
    CHECK(report.batches_total == make_batches(reads).size());
    CHECK(report.batches_sent == report.batches_total);
    CHECK(report.reads_sent == reads.size());
    if (scale > 0) {
      auto span_us = reads.back().timestamp_us - reads.front().timestamp_us;
      CHECK(elapsed >= std::chrono::microseconds(static_cast<std::int64_t>((span_us - 100'000) * scale)));
    }

    REQUIRE(s.engine.wait_idle(5s));
    auto loaded = s.log->load();
    REQUIRE(loaded.trials.size() == 1);
    outcomes.push_back(loaded.trials[0]);
  }
  for (const auto& r : outcomes) {
    CHECK(r.t_start_us == expected.t_start_us);
    CHECK(r.t_end_us == expected.t_end_us);
  }
  CHECK(outcomes[0].speed_mps == outcomes[1].speed_mps);
  CHECK(outcomes[0].classification == Classification::success);
}

TEST_CASE("unreachable endpoint aborts") {
  ReplayOptions o;
  o.endpoint = "http://127.0.0.1:" + std::to_string(closed_port());
  o.time_scale = 0;
  o.retries = 2;
  o.retry_delay = 10ms;
  o.timeout = 1s;
  auto report = replay(uniform_reads(20, 1'000'000), o);
  CHECK(report.aborted);
  CHECK(report.batches_sent == 0);
  CHECK(report.reads_sent == 0);
  CHECK(report.error.find("connection failed") != std::string::npos);

  o.endpoint = "not a url";
  CHECK(replay(uniform_reads(20, 1'000'000), o).aborted);
  o.time_scale = -1;
  CHECK_THROWS_AS(replay(uniform_reads(20, 1'000'000), o), std::invalid_argument);
}

TEST_CASE("rejected batch stops the replay") {
  Server s({4, 4, 2.0, 2.0, 0.4});
  ReplayOptions o;
  o.endpoint = s.endpoint();
  o.time_scale = 0;
  o.keys.epc = "tagId";
  auto report = replay(uniform_reads(20, 1'000'000), o);
  CHECK(report.aborted);
  CHECK(report.batches_sent == 0);
  CHECK(report.error.find("400") != std::string::npos);
}
