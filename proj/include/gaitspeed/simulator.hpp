#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gaitspeed/detection.hpp"
#include "gaitspeed/engine.hpp"
#include "gaitspeed/wire.hpp"

namespace gaitspeed {

/// Log-distance path loss with near-field saturation.
struct PathModel {
  double p0_dbm = -45.0;
  double d0_m = 1.0;
  double exponent = 2.0;
  double d_sat_m = 0.8;

  friend bool operator==(const PathModel&, const PathModel&) = default;
};

double rssi_model(double distance_m, const PathModel& m = {});

/// Antenna pattern attenuation (dB, <= 0) for a tag `along_m` from the
/// antenna boresight at perpendicular distance `lateral_m`. cos^q shape with
/// the half-power point at beamwidth/2, floored at -max_atten_db.
double coupling_gain_db(double along_m, double lateral_m, double beamwidth_deg,
                        double max_atten_db = 30.0);

/// Pre-walk excursion on the entry antenna.
struct FalsePeak {
  double time_s = 0.0;
  double duration_s = 1.0;
  double peak_dbm = -50.0;

  friend bool operator==(const FalsePeak&, const FalsePeak&) = default;
};

struct WalkProfile {
  double speed_mps = 1.0;
  double lateral_offset_m = 0.6;
  double start_x_m = -2.0;
  double sample_rate_hz = 30.0;
  double noise_sigma_dbm = 0.75;
  std::vector<FalsePeak> false_peaks;
  std::uint64_t seed = 0;

  double tag_gain_db = 0.0;      // tag orientation/body loss, both antennas
  double noise_corr_s = 3.0;     // AR(1) correlation time; 0 = white
  double rssi_step_dbm = 1.0;    // reader RSSI resolution; 0 = continuous
  double beamwidth_deg = 55.0;
  double floor_dbm = -70.0;      // reads below this are not reported
  PathModel path{};

  friend bool operator==(const WalkProfile&, const WalkProfile&) = default;
};

/// Throws std::invalid_argument.
void validate(const WalkProfile& p);

struct GroundTruth {
  double true_t1_us = 0.0;  // closest approach to the entry antenna
  double true_t2_us = 0.0;  // closest approach to the exit antenna
  double true_speed_mps = 0.0;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct Walk {
  Trace entry;
  Trace exit;
  GroundTruth truth;
  // Fewer than w1 entry samples: the walk cannot produce a start edge.
  bool sparse_entry = false;
};

/// Straight-line pass from start_x_m to distance_m - start_x_m past
/// antennas at x = 0 and x = params.distance_m. Time 0 is the first sample
/// slot; false peaks play out before the walk starts.
Walk generate_walk(const WalkProfile& profile, const DetectionParams& params);

/// Sample instants at which the tag is inside the saturation radius of the
/// antenna at `antenna_x_m` (noise-free geometry only).
std::size_t saturated_sample_count(const WalkProfile& profile, double antenna_x_m, double distance_m);

// ---------------------------------------------------------------------------
// Capture files

inline constexpr int kEntryPort = 1;
inline constexpr int kExitPort = 2;

struct CaptureHeader {
  GroundTruth truth;
  WalkProfile profile;
  double distance_m = 4.0;
  std::string epc;
};

struct Capture {
  std::optional<CaptureHeader> header;
  std::vector<TagRead> reads;  // chronological
};

/// Interleaves both traces chronologically as reads of `epc`.
std::vector<TagRead> walk_reads(const Walk& w, const std::string& epc);

/// Splits reads of one tag into entry/exit traces according to `roles`.
std::pair<Trace, Trace> split_traces(const std::vector<TagRead>& reads, const AntennaRoles& roles);

ordered_json profile_to_json(const WalkProfile& p);
WalkProfile profile_from_json(const json& j);
ordered_json truth_to_json(const GroundTruth& g);
GroundTruth truth_from_json(const json& j);

void write_capture(const std::filesystem::path& path, const Capture& c, const WireKeys& keys = {});
/// Throws std::runtime_error on I/O or format errors.
Capture read_capture(const std::filesystem::path& path, const WireKeys& keys = {});

// ---------------------------------------------------------------------------
// Corpora

enum class WalkKind { normal, failure, running };
std::string_view to_string(WalkKind k);
WalkKind parse_walk_kind(std::string_view s);

struct CorpusOptions {
  std::size_t n = 26;
  double speed_min_mps = 0.6;
  double speed_max_mps = 1.5;
  std::uint64_t seed = 7;
  double distance_m = 4.0;
  WalkProfile base{};            // noise, rate and pattern settings
  int max_false_peaks = 3;
  bool vary_geometry = true;     // per-walk lateral offset and tag gain
  // Mixed-quality corpora: walks whose entry antenna never reads the tag,
  // and walks faster than the clinical range.
  double failure_fraction = 0.0;
  double running_fraction = 0.0;
  double running_speed_mps = 2.5;
};

struct CorpusEntry {
  std::string file;
  std::string epc;
  WalkKind kind = WalkKind::normal;
  GroundTruth truth;
  WalkProfile profile;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  double speed_min_mps = 0.0;
  double speed_max_mps = 0.0;
  double distance_m = 4.0;
  std::vector<CorpusEntry> walks;
};

struct CorpusWalk {
  CorpusEntry meta;
  Trace entry;
  Trace exit;
};

/// Manifest plus walks, in memory. Deterministic in the options.
std::pair<CorpusManifest, std::vector<CorpusWalk>> build_corpus(const CorpusOptions& opt);

/// Writes walk_NNN.jsonl captures and manifest.json into `dir`.
CorpusManifest generate_corpus(const CorpusOptions& opt, const std::filesystem::path& dir);

CorpusManifest read_manifest(const std::filesystem::path& dir);
std::vector<CorpusWalk> load_corpus(const std::filesystem::path& dir);

std::string simulated_epc(std::size_t index);

}  // namespace gaitspeed
