#include <doctest.h>

#include "gaitspeed/wire.hpp"

using namespace gaitspeed;

namespace {

const std::string kEpc = "300833B2DDD9014000000001";

TrialResult sample_trial() {
  TrialResult r;
  r.tag = {"Tag1", kEpc};
  r.t_start_us = 3'086'000;
  r.t_end_us = 8'410'000;
  r.speed_mps = 4.0 / 5.324;
  r.classification = Classification::success;
  r.entry_sample_count = 412;
  r.exit_sample_count = 37;
  r.completed_at = WallTime(std::chrono::microseconds(1'715'000'123'456'789));
  r.params_snapshot = {14, 12, 1.0, 1.5, 4.0};
  return r;
}

}  // namespace

TEST_CASE("read batches parse and sort") {
  auto reads = parse_read_batch(R"([
    {"epc":"300833B2DDD9014000000001","antennaPort":2,"timestampUs":20,"rssi":-51.5},
    {"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":10,"rssi":-48},
    {"epc":"300833B2DDD9014000000002","antennaPort":1,"timestampUs":20,"rssi":-60}
  ])");
  REQUIRE(reads.size() == 3);
  CHECK(reads[0].timestamp_us == 10);
  CHECK(reads[0].rssi_dbm == -48.0);
  CHECK(reads[1].antenna_port == 2);
  CHECK(reads[2].epc == "300833B2DDD9014000000002");
}

TEST_CASE("batch envelope object") {
  auto reads = parse_read_batch(R"({"reads":[{"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":1,"rssi":-50}]})");
  CHECK(reads.size() == 1);
}

TEST_CASE("malformed batches are rejected whole") {
  CHECK_THROWS_AS(parse_read_batch("not json"), WireError);
  CHECK_THROWS_AS(parse_read_batch("[]"), WireError);
  CHECK_THROWS_AS(parse_read_batch("{}"), WireError);
  CHECK_THROWS_AS(parse_read_batch("42"), WireError);
  const std::string good = R"({"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":1,"rssi":-50})";
  CHECK_THROWS_AS(parse_read_batch("[" + good + R"(,{"epc":"XYZ","antennaPort":1,"timestampUs":2,"rssi":-50}])"), WireError);
  CHECK_THROWS_AS(parse_read_batch(R"([{"epc":"300833B2DDD9014000000001","antennaPort":"1","timestampUs":1,"rssi":-50}])"), WireError);
  CHECK_THROWS_AS(parse_read_batch(R"([{"epc":"300833B2DDD9014000000001","antennaPort":0,"timestampUs":1,"rssi":-50}])"), WireError);
  CHECK_THROWS_AS(parse_read_batch(R"([{"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":-1,"rssi":-50}])"), WireError);
  CHECK_THROWS_AS(parse_read_batch(R"([{"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":1.5,"rssi":-50}])"), WireError);
  CHECK_THROWS_AS(parse_read_batch(R"([{"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":1}])"), WireError);
  CHECK_THROWS_AS(parse_read_batch("[1]"), WireError);
}

TEST_CASE("oversize batches") {
  const std::string one = R"({"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":1,"rssi":-50})";
  std::string body = "[";
  for (std::size_t i = 0; i < kMaxBatchReads; ++i) body += (i ? "," : "") + one;
  CHECK(parse_read_batch(body + "]").size() == kMaxBatchReads);
  CHECK_THROWS_AS(parse_read_batch(body + "," + one + "]"), BatchTooLarge);
}

TEST_CASE("vendor key mapping") {
  WireKeys keys;
  keys.epc = "EPC";
  keys.antenna_port = "ant";
  keys.timestamp_us = "ts";
  keys.rssi = "peakRssi";
  keys.batch = "tag_reads";
  auto reads = parse_read_batch(R"({"tag_reads":[{"EPC":"300833B2DDD9014000000001","ant":2,"ts":7,"peakRssi":-44.5}]})", keys);
  REQUIRE(reads.size() == 1);
  CHECK(reads[0] == TagRead{kEpc, 2, 7, -44.5});
  auto j = read_to_json(reads[0], keys);
  CHECK(j.contains("peakRssi"));
  CHECK(read_from_json(j, keys) == reads[0]);
  CHECK_THROWS_AS(parse_read_batch(R"([{"epc":"300833B2DDD9014000000001","antennaPort":1,"timestampUs":1,"rssi":-50}])", keys), WireError);
}

TEST_CASE("speed formatting keeps three decimals") {
  CHECK(format_speed(0.0) == "0.000");
  CHECK(format_speed(1.0) == "1.000");
  CHECK(format_speed(0.75) == "0.750");
  CHECK(format_speed(0.7513148009015778) == "0.7513148009015778");
  CHECK(std::stod(format_speed(4.0 / 5.324)) == 4.0 / 5.324);
}

TEST_CASE("rfc3339") {
  const WallTime t(std::chrono::microseconds(1'715'000'123'456'789));
  CHECK(format_rfc3339(t) == "2024-05-06T12:55:23.456789Z");
  CHECK(parse_rfc3339(format_rfc3339(t)) == t);
  CHECK(parse_rfc3339("2024-05-06T14:55:23.456789+02:00") == t);
  CHECK(parse_rfc3339("2024-05-06T12:55:23Z") == WallTime(std::chrono::microseconds(1'715'000'123'000'000)));
  CHECK(parse_rfc3339("2024-05-06T12:55:23.5Z") == WallTime(std::chrono::microseconds(1'715'000'123'500'000)));
  CHECK_THROWS_AS(parse_rfc3339("2024-05-06"), WireError);
  CHECK_THROWS_AS(parse_rfc3339("2024-05-06T12:55:23"), WireError);
  CHECK_THROWS_AS(parse_rfc3339("2024-05-06T12:55:23Zjunk"), WireError);
  CHECK_THROWS_AS(parse_rfc3339("2024-05-06T12:55:2xZ"), WireError);
}

TEST_CASE("trial log lines round-trip exactly") {
  auto r = sample_trial();
  const auto line = trial_to_log_line(r);
  auto j = json::parse(line);
  CHECK(j["epc"] == kEpc);
  CHECK(j["label"] == "Tag1");
  CHECK(j["tStartUs"] == 3'086'000);
  CHECK(j["classification"] == "success");
  CHECK(j["entrySamples"] == 412);
  CHECK(j["completedAt"] == "2024-05-06T12:55:23.456789Z");
  CHECK(j["params"]["w2"] == 12);
  CHECK(j["params"]["distanceM"] == 4.0);
  CHECK_FALSE(j.contains("type"));
  CHECK(trial_from_json(j) == r);
}

TEST_CASE("failure trials carry null edges") {
  auto r = sample_trial();
  r.t_start_us.reset();
  r.t_end_us.reset();
  r.speed_mps = 0.0;
  r.classification = Classification::system_failure;
  const auto line = trial_to_log_line(r);
  CHECK(line.find("\"speedMps\":0.000") != std::string::npos);
  auto j = json::parse(line);
  CHECK(j["tStartUs"].is_null());
  CHECK(trial_from_json(j) == r);
}

TEST_CASE("push messages") {
  auto r = sample_trial();
  r.speed_mps = 0.75;
  const auto msg = result_message(r);
  CHECK(msg.rfind(R"({"type":"gait_speed",)", 0) == 0);
  CHECK(msg.find("\"speedMps\":0.750") != std::string::npos);
  auto j = json::parse(msg);
  CHECK(trial_from_json(j) == r);
}

TEST_CASE("params json") {
  DetectionParams p{10, 12, 1.5, 2.5, 3.5};
  CHECK(params_from_json(params_to_json(p)) == p);
  CHECK_THROWS_AS(params_from_json(json{{"w1", 14}}), WireError);
  CHECK_THROWS_AS(params_from_json(json{{"w1", "14"}, {"w2", 14}, {"tau1", 1}, {"tau2", 1}, {"distanceM", 4}}), WireError);
  // Range checks are the caller's job.
  CHECK(params_from_json(json{{"w1", 1}, {"w2", 14}, {"tau1", 1}, {"tau2", 1}, {"distanceM", 4}}).w1 == 1);
}
