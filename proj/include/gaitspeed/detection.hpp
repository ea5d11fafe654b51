#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace gaitspeed {

/// One RSSI observation at one antenna.
struct RssiSample {
  std::int64_t timestamp_us = 0;  // microseconds since stream epoch
  double rssi_dbm = 0.0;

  friend bool operator==(const RssiSample&, const RssiSample&) = default;
};

using Trace = std::vector<RssiSample>;

/// Full configuration of the dual-antenna edge detector.
///
/// Window sizes are in samples, thresholds are RSSI drops in dB and
/// distance_m is the antenna separation along the walking path.
struct DetectionParams {
  int w1 = 14;
  int w2 = 14;
  double tau1 = 1.0;
  double tau2 = 1.0;
  double distance_m = 4.0;

  friend bool operator==(const DetectionParams&, const DetectionParams&) = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
void validate(const DetectionParams& params);

struct EdgeDetection {
  std::int64_t edge_timestamp_us = 0;
  double peak_rssi_dbm = 0.0;
  // Index into the processed sequence at which the drop fired. For the
  // reversed detector this counts positions in the reversed sequence.
  std::size_t trigger_index = 0;

  friend bool operator==(const EdgeDetection&, const EdgeDetection&) = default;
};

class InvalidInterval : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ReferenceUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entry-antenna right-edge detection over a complete buffered trace.
///
/// Walks the trace newest to oldest with a window of `window` samples and
/// returns the window maximum as soon as it exceeds the oldest sample in the
/// window by at least `tau`. Ties for the maximum go to the sample seen first
/// in reversed order, which is the latest one in forward time. The newest
/// peak in the trace is therefore found before any earlier excursion.
///
/// Throws std::invalid_argument on window < 2, tau <= 0 or timestamps that
/// are not strictly increasing.
std::optional<EdgeDetection> detect_right_edge_reversed(std::span<const RssiSample> samples,
                                                        int window, double tau);

/// Streaming exit-antenna detector. Feed samples in arrival order; the first
/// window whose maximum exceeds the newest sample by `tau` reports the
/// sample just before the trigger as the edge. Latched after firing.
class ForwardDetector {
 public:
  ForwardDetector(int window, double tau);

  std::optional<EdgeDetection> step(const RssiSample& sample);

  bool fired() const { return fired_; }
  std::size_t samples_seen() const { return seen_; }
  int window() const { return window_; }
  double tau() const { return tau_; }
  void reset();

 private:
  int window_;
  double tau_;
  std::deque<RssiSample> buf_;
  std::size_t seen_ = 0;
  bool fired_ = false;
};

/// Batch form of the forward detector.
std::optional<EdgeDetection> detect_right_edge_forward(std::span<const RssiSample> samples,
                                                       int window, double tau);

/// Speed in m/s over the interval [t_start_us, t_end_us].
/// Throws InvalidInterval when t_end_us <= t_start_us.
double compute_gait_speed(std::int64_t t_start_us, std::int64_t t_end_us, double distance_m);

enum class ScanOrder { forward, reverse };

/// Fixed-threshold crossing: first sample at or above the threshold when
/// scanning forward, last such sample when scanning in reverse.
std::optional<std::int64_t> baseline_threshold_detect(std::span<const RssiSample> samples,
                                                      double threshold_dbm, ScanOrder order);

/// Entry trace restricted to samples strictly before `cutoff_us`.
std::span<const RssiSample> truncate_before(std::span<const RssiSample> samples,
                                            std::int64_t cutoff_us);

struct EdgePair {
  std::int64_t t_start_us = 0;
  std::int64_t t_end_us = 0;

  friend bool operator==(const EdgePair&, const EdgePair&) = default;
};

/// Offline reference for one walk: reversed detection on the entry trace up
/// to the first exit read, batch forward detection on the exit trace.
/// Throws ReferenceUnavailable if either edge is missing.
EdgePair offline_reference_edges(std::span<const RssiSample> entry,
                                 std::span<const RssiSample> exit,
                                 const DetectionParams& params);

/// Threshold-crossing baseline with the same entry/exit structure.
std::optional<EdgePair> baseline_edges(std::span<const RssiSample> entry,
                                       std::span<const RssiSample> exit, double threshold_dbm);

}  // namespace gaitspeed
