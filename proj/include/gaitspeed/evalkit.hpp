#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitspeed/detection.hpp"
#include "gaitspeed/session.hpp"
#include "gaitspeed/simulator.hpp"

namespace gaitspeed {

/// Published clinical agreement figures (RFID vs stopwatch, outpatient
/// deployment). Shown next to locally computed statistics for comparison.
namespace clinical_reference {
inline constexpr double kMaeMps = 0.064;
inline constexpr double kBiasMps = 0.061;
inline constexpr double kLoaLowMps = -0.070;
inline constexpr double kLoaHighMps = 0.191;
inline constexpr double kSuccessRate = 0.877;  // 847 of 966 trials
}  // namespace clinical_reference

class InsufficientData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularFit : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PairedMeasurement {
  double v_test_mps = 0.0;
  double v_ref_mps = 0.0;
  std::optional<std::string> label;
};

/// |v_measured - v_ref| / v_ref * 100. Throws std::invalid_argument if v_ref <= 0.
double error_pct(double v_measured, double v_ref);

/// Throws InsufficientData on empty input.
double mae(std::span<const PairedMeasurement> pairs);

struct BlandAltmanPoint {
  double mean = 0.0;
  double diff = 0.0;  // test - ref
};

struct AgreementReport {
  std::size_t n = 0;
  double mae_mps = 0.0;
  double mean_error_pct = 0.0;
  double bias_mps = 0.0;
  double sd_mps = 0.0;  // n - 1 denominator
  double loa_low_mps = 0.0;
  double loa_high_mps = 0.0;
  std::vector<BlandAltmanPoint> points;
};

/// Throws InsufficientData when n < 2.
AgreementReport bland_altman(std::span<const PairedMeasurement> pairs);

// ---------------------------------------------------------------------------
// Corpus evaluation

struct EvalWalk {
  Trace entry;
  Trace exit;
  double reference_mps = 0.0;
};

/// Ground-truth speed as the reference.
std::vector<EvalWalk> eval_walks(std::span<const CorpusWalk> corpus);

/// The proposed pipeline as run by the engine for one walk, or nullopt
/// when either edge is missing or the edges are out of order.
std::optional<double> proposed_speed(std::span<const RssiSample> entry, std::span<const RssiSample> exit,
                                     const DetectionParams& params);

/// Threshold-crossing baseline for one walk.
std::optional<double> baseline_speed(std::span<const RssiSample> entry, std::span<const RssiSample> exit,
                                     double threshold_dbm, double distance_m);

struct SweepCell {
  int w = 0;
  double tau = 0.0;
  double mean_error_pct = 0.0;  // over successful walks; NaN if none
  double mae_mps = 0.0;         // over successful walks; NaN if none
  double success_fraction = 0.0;
  std::size_t successes = 0;
  std::size_t n = 0;

  friend bool operator==(const SweepCell&, const SweepCell&) = default;
};

struct SweepGrid {
  std::vector<int> w_values;
  std::vector<double> tau_values;
  DetectionParams base{};  // distance and anything not swept
};

/// Uses the same w for both antennas. Cells are ordered tau-major, then w.
/// Throws InsufficientData on an empty corpus.
std::vector<SweepCell> parameter_sweep(std::span<const EvalWalk> corpus, const SweepGrid& grid);
/// Single-threaded reference with identical output.
std::vector<SweepCell> parameter_sweep_serial(std::span<const EvalWalk> corpus, const SweepGrid& grid);

struct BaselineRow {
  double threshold_dbm = 0.0;
  std::size_t successes = 0;
  std::size_t n = 0;
  double success_fraction = 0.0;
  double mae_mps = 0.0;         // NaN if no successes
  double mean_error_pct = 0.0;  // NaN if no successes
  std::size_t rank = 0;         // 1 = best

  friend bool operator==(const BaselineRow&, const BaselineRow&) = default;
};

struct ThresholdRange {
  double low_dbm = -70.0;
  double high_dbm = -40.0;
  double step_dbm = 1.0;
  // Thresholds below this success fraction rank after all that reach it.
  double min_success_fraction = 0.5;
};

/// Evaluates every threshold in the range, ranked by MAE. Rows are returned
/// in rank order. Throws std::invalid_argument on an empty range.
std::vector<BaselineRow> threshold_search(std::span<const EvalWalk> corpus, const ThresholdRange& range,
                                          double distance_m);
std::vector<BaselineRow> threshold_search_serial(std::span<const EvalWalk> corpus, const ThresholdRange& range,
                                                 double distance_m);

std::vector<double> threshold_values(const ThresholdRange& range);

// ---------------------------------------------------------------------------
// Deployment outcomes

struct OutcomeCounts {
  std::size_t success = 0;
  std::size_t system_failure = 0;
  std::size_t erroneous = 0;
  std::size_t excluded = 0;

  std::size_t total() const { return success + system_failure + erroneous + excluded; }
  double pct(std::size_t part) const { return total() ? 100.0 * static_cast<double>(part) / total() : 0.0; }
};

struct SuccessSummary {
  OutcomeCounts overall;
  std::map<std::string, OutcomeCounts> by_tag;
  bool empty() const { return overall.total() == 0; }
};

/// Operator annotation: a zero-speed trial the clinician marked as not a
/// real attempt. Matched on tag (label or EPC) and completedAt.
struct Exclusion {
  std::string tag;
  WallTime completed_at{};
  std::string reason;
};

/// Reads {"excluded": [{"tag", "completedAt", "reason"}]}.
std::vector<Exclusion> read_exclusions(const std::filesystem::path& path);

SuccessSummary success_summary(std::span<const TrialResult> trials, std::span<const Exclusion> exclusions = {});

// ---------------------------------------------------------------------------
// Regression

struct FitBandPoint {
  double x = 0.0;
  double y_fit = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct LinearFit {
  std::size_t n = 0;
  double slope = 0.0;
  double intercept = 0.0;
  double slope_ci_low = 0.0;
  double slope_ci_high = 0.0;
  double residual_se = 0.0;
  double r_squared = 0.0;
  double t_critical = 0.0;
  double confidence = 0.95;
  std::vector<FitBandPoint> band;  // mean-response interval over the x range
};

/// Removes points whose y (speed) lies outside [kMinClinicalSpeed,
/// kMaxClinicalSpeed]. Returns how many were removed.
std::size_t drop_nonclinical(std::vector<std::pair<double, double>>& points);

/// Ordinary least squares. Throws InsufficientData for n < 3 and
/// SingularFit when all x are equal.
LinearFit linear_fit(std::span<const std::pair<double, double>> points, double confidence = 0.95,
                     std::size_t band_points = 50);

// ---------------------------------------------------------------------------
// Columnar output (tab separated, one header row)

void write_sweep_table(std::ostream& out, std::span<const SweepCell> cells);
void write_baseline_table(std::ostream& out, std::span<const BaselineRow> rows);
void write_agreement_points(std::ostream& out, std::span<const BlandAltmanPoint> points);
void write_fit_band(std::ostream& out, const LinearFit& fit);
void write_summary_table(std::ostream& out, const SuccessSummary& s);

}  // namespace gaitspeed
