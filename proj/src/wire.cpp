#include "gaitspeed/wire.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>

namespace gaitspeed {

namespace {

constexpr std::string_view kSpeedPlaceholder = "\"@@speedMps@@\"";

[[noreturn]] void bad(const std::string& what) { throw WireError(what); }

std::int64_t require_int(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) bad("missing field '" + key + "'");
  if (!it->is_number_integer()) bad("field '" + key + "' must be an integer");
  return it->get<std::int64_t>();
}

double require_number(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) bad("missing field '" + key + "'");
  if (!it->is_number()) bad("field '" + key + "' must be a number");
  double v = it->get<double>();
  if (!std::isfinite(v)) bad("field '" + key + "' must be finite");
  return v;
}

std::string require_string(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) bad("missing field '" + key + "'");
  if (!it->is_string()) bad("field '" + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::int64_t> optional_int(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer()) bad("field '" + key + "' must be an integer or null");
  return it->get<std::int64_t>();
}

ordered_json trial_body(const TrialResult& r) {
  ordered_json j;
  j["epc"] = r.tag.epc;
  j["label"] = r.tag.label;
  j["tStartUs"] = r.t_start_us ? ordered_json(*r.t_start_us) : ordered_json(nullptr);
  j["tEndUs"] = r.t_end_us ? ordered_json(*r.t_end_us) : ordered_json(nullptr);
  j["speedMps"] = "@@speedMps@@";
  j["classification"] = std::string(to_string(r.classification));
  j["entrySamples"] = r.entry_sample_count;
  j["exitSamples"] = r.exit_sample_count;
  j["completedAt"] = format_rfc3339(r.completed_at);
  j["params"] = params_to_json(r.params_snapshot);
  return j;
}

std::string dump_with_speed(const ordered_json& j, double speed) {
  std::string s = j.dump();
  auto pos = s.find(kSpeedPlaceholder);
  s.replace(pos, kSpeedPlaceholder.size(), format_speed(speed));
  return s;
}

int parse_fixed(std::string_view s, std::size_t pos, std::size_t len) {
  if (pos + len > s.size()) throw WireError("truncated timestamp");
  int v = 0;
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
  if (ec != std::errc{} || p != s.data() + pos + len) throw WireError("bad timestamp digits");
  return v;
}

}  // namespace

TagRead read_from_json(const json& j, const WireKeys& keys) {
  if (!j.is_object()) bad("read record must be an object");
  TagRead r;
  r.epc = require_string(j, keys.epc);
  if (!is_valid_epc(r.epc)) bad("malformed EPC '" + r.epc + "'");
  auto port = require_int(j, keys.antenna_port);
  if (port < 1 || port > 65535) bad("antenna port out of range");
  r.antenna_port = static_cast<int>(port);
  r.timestamp_us = require_int(j, keys.timestamp_us);
  if (r.timestamp_us < 0) bad("timestamp must be non-negative");
  r.rssi_dbm = require_number(j, keys.rssi);
  return r;
}

ordered_json read_to_json(const TagRead& read, const WireKeys& keys) {
  ordered_json j;
  j[keys.epc] = read.epc;
  j[keys.antenna_port] = read.antenna_port;
  j[keys.timestamp_us] = read.timestamp_us;
  j[keys.rssi] = read.rssi_dbm;
  return j;
}

std::vector<TagRead> parse_read_batch(std::string_view body, const WireKeys& keys) {
  json doc = json::parse(body.begin(), body.end(), nullptr, false);
  if (doc.is_discarded()) bad("body is not valid JSON");

  const json* records = &doc;
  if (doc.is_object()) {
    auto it = doc.find(keys.batch);
    if (it == doc.end()) bad("batch object lacks '" + keys.batch + "' array");
    records = &*it;
  }
  if (!records->is_array()) bad("batch must be an array of reads");
  if (records->empty()) bad("batch is empty");
  if (records->size() > kMaxBatchReads)
    throw BatchTooLarge("batch holds " + std::to_string(records->size()) + " reads (max " +
                        std::to_string(kMaxBatchReads) + ")");

  std::vector<TagRead> reads;
  reads.reserve(records->size());
  for (std::size_t i = 0; i < records->size(); ++i) {
    try {
      reads.push_back(read_from_json((*records)[i], keys));
    } catch (const WireError& e) {
      bad("read " + std::to_string(i) + ": " + e.what());
    }
  }
  std::stable_sort(reads.begin(), reads.end(), [](const TagRead& a, const TagRead& b) {
    return a.timestamp_us < b.timestamp_us;
  });
  return reads;
}

std::string format_speed(double speed_mps) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, speed_mps, std::chars_format::fixed);
  std::string s = ec == std::errc{} ? std::string(buf, end) : std::to_string(speed_mps);
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    s += ".000";
  } else {
    while (s.size() - dot - 1 < 3) s += '0';
  }
  return s;
}

std::string format_rfc3339(WallTime t) {
  using namespace std::chrono;
  auto secs = floor<seconds>(t);
  auto micros = (t - secs).count();
  std::time_t tt = secs.time_since_epoch().count();
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06lldZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<long long>(micros));
  return buf;
}

WallTime parse_rfc3339(std::string_view s) {
  if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't') ||
      s[13] != ':' || s[16] != ':')
    throw WireError("not an RFC 3339 timestamp: '" + std::string(s) + "'");
  std::tm tm{};
  tm.tm_year = parse_fixed(s, 0, 4) - 1900;
  tm.tm_mon = parse_fixed(s, 5, 2) - 1;
  tm.tm_mday = parse_fixed(s, 8, 2);
  tm.tm_hour = parse_fixed(s, 11, 2);
  tm.tm_min = parse_fixed(s, 14, 2);
  tm.tm_sec = parse_fixed(s, 17, 2);

  std::size_t pos = 19;
  std::int64_t micros = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      if (digits < 6) micros = micros * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) throw WireError("empty fractional seconds");
    for (int d = digits; d < 6; ++d) micros *= 10;
  }
  std::int64_t offset_s = 0;
  if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    int sign = s[pos] == '-' ? -1 : 1;
    if (pos + 6 > s.size() || s[pos + 3] != ':') throw WireError("bad UTC offset");
    offset_s = sign * (parse_fixed(s, pos + 1, 2) * 3600 + parse_fixed(s, pos + 4, 2) * 60);
    pos += 6;
  } else {
    throw WireError("missing UTC offset");
  }
  if (pos != s.size()) throw WireError("trailing characters in timestamp");

  std::time_t secs = timegm(&tm) - offset_s;
  return WallTime(std::chrono::microseconds(static_cast<std::int64_t>(secs) * 1'000'000 + micros));
}

ordered_json params_to_json(const DetectionParams& p) {
  ordered_json j;
  j["w1"] = p.w1;
  j["w2"] = p.w2;
  j["tau1"] = p.tau1;
  j["tau2"] = p.tau2;
  j["distanceM"] = p.distance_m;
  return j;
}

DetectionParams params_from_json(const json& j) {
  if (!j.is_object()) bad("params must be an object");
  DetectionParams p;
  auto w1 = require_int(j, "w1");
  auto w2 = require_int(j, "w2");
  if (w1 < INT32_MIN || w1 > INT32_MAX || w2 < INT32_MIN || w2 > INT32_MAX)
    bad("window size out of range");
  p.w1 = static_cast<int>(w1);
  p.w2 = static_cast<int>(w2);
  p.tau1 = require_number(j, "tau1");
  p.tau2 = require_number(j, "tau2");
  p.distance_m = require_number(j, "distanceM");
  return p;
}

std::string trial_to_log_line(const TrialResult& r) { return dump_with_speed(trial_body(r), r.speed_mps); }

std::string result_message(const TrialResult& r) {
  ordered_json j;
  j["type"] = "gait_speed";
  const auto body = trial_body(r);
  for (const auto& [k, v] : body.items()) j[k] = v;
  return dump_with_speed(j, r.speed_mps);
}

TrialResult trial_from_json(const json& j) {
  if (!j.is_object()) bad("trial record must be an object");
  TrialResult r;
  r.tag.epc = require_string(j, "epc");
  r.tag.label = require_string(j, "label");
  r.t_start_us = optional_int(j, "tStartUs");
  r.t_end_us = optional_int(j, "tEndUs");
  r.speed_mps = require_number(j, "speedMps");
  auto cls = parse_classification(require_string(j, "classification"));
  if (!cls) bad("unknown classification");
  r.classification = *cls;
  r.entry_sample_count = static_cast<int>(require_int(j, "entrySamples"));
  r.exit_sample_count = static_cast<int>(require_int(j, "exitSamples"));
  r.completed_at = parse_rfc3339(require_string(j, "completedAt"));
  auto params = j.find("params");
  if (params == j.end()) bad("missing field 'params'");
  r.params_snapshot = params_from_json(*params);
  return r;
}

}  // namespace gaitspeed
