#include "gaitspeed/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

namespace gaitspeed {

double rssi_model(double distance_m, const PathModel& m) {
  if (!(distance_m >= 0.0)) throw std::invalid_argument("distance must be >= 0");
  return m.p0_dbm - 10.0 * m.exponent * std::log10(std::max(distance_m, m.d_sat_m) / m.d0_m);
}

double coupling_gain_db(double along_m, double lateral_m, double beamwidth_deg, double max_atten_db) {
  const double half = beamwidth_deg / 2.0 * std::numbers::pi / 180.0;
  const double q = std::log(std::sqrt(0.5)) / std::log(std::cos(half));
  const double c = std::cos(std::atan2(std::abs(along_m), lateral_m));
  if (c <= 1e-12) return -max_atten_db;
  return std::max(20.0 * q * std::log10(c), -max_atten_db);
}

void validate(const WalkProfile& p) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (!(p.speed_mps > 0.0) || !std::isfinite(p.speed_mps)) fail("speed must be > 0");
  if (!(p.sample_rate_hz > 0.0)) fail("sample rate must be > 0");
  if (!(p.noise_sigma_dbm >= 0.0)) fail("noise sigma must be >= 0");
  if (!(p.lateral_offset_m > 0.0)) fail("lateral offset must be > 0");
  if (!(p.start_x_m < 0.0)) fail("start position must be before the entry antenna");
  if (!(p.noise_corr_s >= 0.0)) fail("noise correlation time must be >= 0");
  if (!(p.rssi_step_dbm >= 0.0)) fail("rssi step must be >= 0");
  if (!(p.beamwidth_deg > 0.0 && p.beamwidth_deg < 180.0)) fail("beamwidth must be in (0, 180)");
  for (const auto& fp : p.false_peaks)
    if (!(fp.time_s >= 0.0) || !(fp.duration_s > 0.0)) fail("false peak needs time >= 0 and duration > 0");
}

Walk generate_walk(const WalkProfile& profile, const DetectionParams& params) {
  validate(profile);
  const double D = params.distance_m;
  const double v = profile.speed_mps;
  const double x0 = profile.start_x_m;
  const double x1 = D - x0;

  double lead = 0.0;
  for (const auto& fp : profile.false_peaks) lead = std::max(lead, fp.time_s + fp.duration_s);
  if (!profile.false_peaks.empty()) lead += 1.0;

  const double t_end = lead + (x1 - x0) / v;
  const double dt = 1.0 / profile.sample_rate_hz;
  const double rho = profile.noise_corr_s > 0.0 ? std::exp(-dt / profile.noise_corr_s) : 0.0;
  const double innov = std::sqrt(1.0 - rho * rho);

  std::mt19937_64 rng(profile.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = profile.noise_sigma_dbm;

  Walk w;
  for (int a = 0; a < 2; ++a) {
    const double ax = a == 0 ? 0.0 : D;
    Trace& out = a == 0 ? w.entry : w.exit;
    double e = sigma > 0.0 ? sigma * normal(rng) : 0.0;
    for (long k = 0;; ++k) {
      // The exit antenna is polled half a slot after the entry antenna.
      const double t = (static_cast<double>(k) + 0.5 * a) * dt;
      if (t > t_end) break;
      double r;
      if (t < lead) {
        r = -200.0;
        if (a == 0) {
          for (const auto& fp : profile.false_peaks) {
            if (t >= fp.time_s && t <= fp.time_s + fp.duration_s) {
              const double s = std::sin(std::numbers::pi * (t - fp.time_s) / fp.duration_s);
              r = std::max(r, -75.0 + (fp.peak_dbm + 75.0) * s * s);
            }
          }
        }
      } else {
        const double dx = x0 + v * (t - lead) - ax;
        r = rssi_model(std::hypot(dx, profile.lateral_offset_m), profile.path) +
            coupling_gain_db(dx, profile.lateral_offset_m, profile.beamwidth_deg) + profile.tag_gain_db;
      }
      if (sigma > 0.0) {
        e = rho * e + innov * sigma * normal(rng);
        r += e;
      }
      if (profile.rssi_step_dbm > 0.0) r = std::round(r / profile.rssi_step_dbm) * profile.rssi_step_dbm;
      if (r >= profile.floor_dbm) out.push_back({std::llround(t * 1e6), r});
    }
  }

  w.truth.true_t1_us = (lead + (0.0 - x0) / v) * 1e6;
  w.truth.true_t2_us = w.truth.true_t1_us + D / v * 1e6;
  w.truth.true_speed_mps = v;
  w.sparse_entry = static_cast<int>(w.entry.size()) < params.w1;
  if (w.sparse_entry)
    spdlog::warn("walk seed {}: only {} entry samples (w1 = {})", profile.seed, w.entry.size(), params.w1);
  return w;
}

std::size_t saturated_sample_count(const WalkProfile& p, double antenna_x_m, double distance_m) {
  validate(p);
  const double x1 = distance_m - p.start_x_m;
  const double dt = 1.0 / p.sample_rate_hz;
  const double t_end = (x1 - p.start_x_m) / p.speed_mps;
  std::size_t n = 0;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t > t_end) break;
    const double dx = p.start_x_m + p.speed_mps * t - antenna_x_m;
    n += std::hypot(dx, p.lateral_offset_m) <= p.path.d_sat_m;
  }
  return n;
}

// ---------------------------------------------------------------------------

std::vector<TagRead> walk_reads(const Walk& w, const std::string& epc) {
  std::vector<TagRead> reads;
  reads.reserve(w.entry.size() + w.exit.size());
  for (const auto& s : w.entry) reads.push_back({epc, kEntryPort, s.timestamp_us, s.rssi_dbm});
  for (const auto& s : w.exit) reads.push_back({epc, kExitPort, s.timestamp_us, s.rssi_dbm});
  std::stable_sort(reads.begin(), reads.end(),
                   [](const TagRead& a, const TagRead& b) { return a.timestamp_us < b.timestamp_us; });
  return reads;
}

std::pair<Trace, Trace> split_traces(const std::vector<TagRead>& reads, const AntennaRoles& roles) {
  std::pair<Trace, Trace> out;
  for (const auto& r : reads) {
    auto it = roles.find(r.antenna_port);
    if (it == roles.end()) continue;
    if (it->second == AntennaRole::entry) out.first.push_back({r.timestamp_us, r.rssi_dbm});
    if (it->second == AntennaRole::exit) out.second.push_back({r.timestamp_us, r.rssi_dbm});
  }
  return out;
}

ordered_json profile_to_json(const WalkProfile& p) {
  ordered_json j;
  j["speedMps"] = p.speed_mps;
  j["lateralOffsetM"] = p.lateral_offset_m;
  j["startXM"] = p.start_x_m;
  j["sampleRateHz"] = p.sample_rate_hz;
  j["noiseSigmaDbm"] = p.noise_sigma_dbm;
  ordered_json fps = ordered_json::array();
  for (const auto& fp : p.false_peaks)
    fps.push_back({{"timeS", fp.time_s}, {"durationS", fp.duration_s}, {"peakDbm", fp.peak_dbm}});
  j["falsePeaks"] = fps;
  j["seed"] = p.seed;
  j["tagGainDb"] = p.tag_gain_db;
  j["noiseCorrS"] = p.noise_corr_s;
  j["rssiStepDbm"] = p.rssi_step_dbm;
  j["beamwidthDeg"] = p.beamwidth_deg;
  j["floorDbm"] = p.floor_dbm;
  j["path"] = {{"p0Dbm", p.path.p0_dbm},
               {"d0M", p.path.d0_m},
               {"exponent", p.path.exponent},
               {"dSatM", p.path.d_sat_m}};
  return j;
}

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

WalkProfile profile_from_json(const json& j) {
  WalkProfile p;
  read_opt(j, "speedMps", p.speed_mps);
  read_opt(j, "lateralOffsetM", p.lateral_offset_m);
  read_opt(j, "startXM", p.start_x_m);
  read_opt(j, "sampleRateHz", p.sample_rate_hz);
  read_opt(j, "noiseSigmaDbm", p.noise_sigma_dbm);
  if (auto it = j.find("falsePeaks"); it != j.end()) {
    for (const auto& f : *it)
      p.false_peaks.push_back({f.at("timeS").get<double>(), f.at("durationS").get<double>(),
                               f.at("peakDbm").get<double>()});
  }
  read_opt(j, "seed", p.seed);
  read_opt(j, "tagGainDb", p.tag_gain_db);
  read_opt(j, "noiseCorrS", p.noise_corr_s);
  read_opt(j, "rssiStepDbm", p.rssi_step_dbm);
  read_opt(j, "beamwidthDeg", p.beamwidth_deg);
  read_opt(j, "floorDbm", p.floor_dbm);
  if (auto it = j.find("path"); it != j.end()) {
    read_opt(*it, "p0Dbm", p.path.p0_dbm);
    read_opt(*it, "d0M", p.path.d0_m);
    read_opt(*it, "exponent", p.path.exponent);
    read_opt(*it, "dSatM", p.path.d_sat_m);
  }
  return p;
}

ordered_json truth_to_json(const GroundTruth& g) {
  ordered_json j;
  j["trueT1Us"] = g.true_t1_us;
  j["trueT2Us"] = g.true_t2_us;
  j["trueSpeedMps"] = g.true_speed_mps;
  return j;
}

GroundTruth truth_from_json(const json& j) {
  return {j.at("trueT1Us").get<double>(), j.at("trueT2Us").get<double>(), j.at("trueSpeedMps").get<double>()};
}

void write_capture(const std::filesystem::path& path, const Capture& c, const WireKeys& keys) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (c.header) {
    ordered_json h;
    h["type"] = "header";
    h["groundTruth"] = truth_to_json(c.header->truth);
    h["profile"] = profile_to_json(c.header->profile);
    h["distanceM"] = c.header->distance_m;
    h["epc"] = c.header->epc;
    out << h.dump() << '\n';
  }
  for (const auto& r : c.reads) out << read_to_json(r, keys).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Capture read_capture(const std::filesystem::path& path, const WireKeys& keys) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Capture c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
    try {
      if (auto t = j.find("type"); t != j.end() && *t == "header") {
        if (lineno != 1 || c.header) fail("header must be the first line");
        CaptureHeader h;
        h.truth = truth_from_json(j.at("groundTruth"));
        h.profile = profile_from_json(j.at("profile"));
        h.distance_m = j.at("distanceM").get<double>();
        h.epc = j.at("epc").get<std::string>();
        c.header = std::move(h);
      } else {
        c.reads.push_back(read_from_json(j, keys));
      }
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  for (std::size_t i = 1; i < c.reads.size(); ++i)
    if (c.reads[i].timestamp_us < c.reads[i - 1].timestamp_us)
      throw std::runtime_error(path.string() + ": reads are not in chronological order");
  return c;
}

// ---------------------------------------------------------------------------

std::string_view to_string(WalkKind k) {
  switch (k) {
    case WalkKind::normal: return "normal";
    case WalkKind::failure: return "failure";
    case WalkKind::running: return "running";
  }
  return "normal";
}

WalkKind parse_walk_kind(std::string_view s) {
  if (s == "normal") return WalkKind::normal;
  if (s == "failure") return WalkKind::failure;
  if (s == "running") return WalkKind::running;
  throw std::invalid_argument("unknown walk kind '" + std::string(s) + "'");
}

std::string simulated_epc(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "E28011700000%012zX", index + 1);
  return buf;
}

std::pair<CorpusManifest, std::vector<CorpusWalk>> build_corpus(const CorpusOptions& opt) {
  if (opt.n < 1) throw std::invalid_argument("corpus needs at least one walk");
  if (!(opt.speed_min_mps > 0.0) || opt.speed_max_mps < opt.speed_min_mps)
    throw std::invalid_argument("bad speed range");
  if (opt.max_false_peaks < 0) throw std::invalid_argument("max_false_peaks must be >= 0");
  if (opt.failure_fraction < 0 || opt.running_fraction < 0 || opt.failure_fraction + opt.running_fraction > 1)
    throw std::invalid_argument("walk kind fractions must be in [0, 1] and sum to <= 1");

  DetectionParams params;
  params.distance_m = opt.distance_m;

  std::mt19937_64 master(opt.seed);
  using U = std::uniform_real_distribution<double>;
  auto uniform = [&](double lo, double hi) { return lo == hi ? (master(), lo) : U(lo, hi)(master); };

  CorpusManifest m;
  m.seed = opt.seed;
  m.speed_min_mps = opt.speed_min_mps;
  m.speed_max_mps = opt.speed_max_mps;
  m.distance_m = opt.distance_m;
  std::vector<CorpusWalk> walks;

  for (std::size_t i = 0; i < opt.n; ++i) {
    WalkProfile p = opt.base;
    p.speed_mps = uniform(opt.speed_min_mps, opt.speed_max_mps);
    const int k = std::uniform_int_distribution<int>(0, opt.max_false_peaks)(master);
    p.false_peaks.clear();
    double t = 0.5;
    for (int f = 0; f < k; ++f) {
      FalsePeak fp;
      fp.time_s = t;
      fp.duration_s = uniform(0.5, 1.5);
      fp.peak_dbm = uniform(-58.0, -48.0);
      t += fp.duration_s + uniform(0.5, 1.5);
      p.false_peaks.push_back(fp);
    }
    const double lateral = uniform(0.45, 0.75);
    const double gain = uniform(-2.0, 2.0);
    if (opt.vary_geometry) {
      p.lateral_offset_m = lateral;
      p.tag_gain_db = gain;
    }
    p.seed = master();
    const double u = uniform(0.0, 1.0);

    CorpusEntry e;
    e.kind = u < opt.failure_fraction                          ? WalkKind::failure
             : u < opt.failure_fraction + opt.running_fraction ? WalkKind::running
                                                               : WalkKind::normal;
    if (e.kind == WalkKind::running) p.speed_mps = opt.running_speed_mps;

    Walk w = generate_walk(p, params);
    if (e.kind == WalkKind::failure) w.entry.clear();

    char name[32];
    std::snprintf(name, sizeof name, "walk_%03zu.jsonl", i);
    e.file = name;
    e.epc = simulated_epc(i);
    e.truth = w.truth;
    e.profile = p;
    m.walks.push_back(e);
    walks.push_back({std::move(e), std::move(w.entry), std::move(w.exit)});
  }
  return {std::move(m), std::move(walks)};
}

namespace {

ordered_json manifest_to_json(const CorpusManifest& m) {
  ordered_json j;
  j["seed"] = m.seed;
  j["n"] = m.walks.size();
  j["speedRange"] = {m.speed_min_mps, m.speed_max_mps};
  j["distanceM"] = m.distance_m;
  ordered_json arr = ordered_json::array();
  for (const auto& w : m.walks) {
    ordered_json e;
    e["file"] = w.file;
    e["epc"] = w.epc;
    e["kind"] = to_string(w.kind);
    e["groundTruth"] = truth_to_json(w.truth);
    e["profile"] = profile_to_json(w.profile);
    arr.push_back(std::move(e));
  }
  j["walks"] = std::move(arr);
  return j;
}

}  // namespace

CorpusManifest generate_corpus(const CorpusOptions& opt, const std::filesystem::path& dir) {
  auto [manifest, walks] = build_corpus(opt);
  std::filesystem::create_directories(dir);
  for (const auto& w : walks) {
    Walk tmp{w.entry, w.exit, w.meta.truth, false};
    Capture c;
    c.header = CaptureHeader{w.meta.truth, w.meta.profile, opt.distance_m, w.meta.epc};
    c.reads = walk_reads(tmp, w.meta.epc);
    write_capture(dir / w.meta.file, c);
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) throw std::runtime_error("manifest write failed in " + dir.string());
  return manifest;
}

CorpusManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(path.string() + ": not valid JSON");
  try {
    CorpusManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.speed_min_mps = j.at("speedRange").at(0).get<double>();
    m.speed_max_mps = j.at("speedRange").at(1).get<double>();
    m.distance_m = j.at("distanceM").get<double>();
    for (const auto& e : j.at("walks")) {
      CorpusEntry c;
      c.file = e.at("file").get<std::string>();
      c.epc = e.at("epc").get<std::string>();
      c.kind = parse_walk_kind(e.at("kind").get<std::string>());
      c.truth = truth_from_json(e.at("groundTruth"));
      c.profile = profile_from_json(e.at("profile"));
      m.walks.push_back(std::move(c));
    }
    return m;
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<CorpusWalk> load_corpus(const std::filesystem::path& dir) {
  auto m = read_manifest(dir);
  const AntennaRoles roles{{kEntryPort, AntennaRole::entry}, {kExitPort, AntennaRole::exit}};
  std::vector<CorpusWalk> out;
  out.reserve(m.walks.size());
  for (auto& e : m.walks) {
    auto c = read_capture(dir / e.file);
    auto [entry, exit] = split_traces(c.reads, roles);
    out.push_back({std::move(e), std::move(entry), std::move(exit)});
  }
  return out;
}

}  // namespace gaitspeed
