#include "gaitspeed/detection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gaitspeed {

namespace {

void check_window(int window, double tau) {
  if (window < 2) throw std::invalid_argument("window must hold at least 2 samples");
  if (!(tau > 0.0)) throw std::invalid_argument("drop threshold must be positive");
}

void check_monotone(std::span<const RssiSample> samples) {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].timestamp_us <= samples[i - 1].timestamp_us) {
      throw std::invalid_argument("timestamps not strictly increasing at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

void validate(const DetectionParams& p) {
  if (p.w1 < 2) throw std::invalid_argument("w1 must be >= 2");
  if (p.w2 < 2) throw std::invalid_argument("w2 must be >= 2");
  if (!(p.tau1 > 0.0) || !std::isfinite(p.tau1)) throw std::invalid_argument("tau1 must be > 0");
  if (!(p.tau2 > 0.0) || !std::isfinite(p.tau2)) throw std::invalid_argument("tau2 must be > 0");
  if (!(p.distance_m > 0.0) || !std::isfinite(p.distance_m))
    throw std::invalid_argument("distanceM must be > 0");
}

std::optional<EdgeDetection> detect_right_edge_reversed(std::span<const RssiSample> samples,
                                                        int window, double tau) {
  check_window(window, tau);
  check_monotone(samples);

  const auto w = static_cast<std::size_t>(window);
  if (samples.size() < w) return std::nullopt;

  std::vector<RssiSample> reversed(samples.rbegin(), samples.rend());
  for (std::size_t i = w - 1; i < reversed.size(); ++i) {
    const std::size_t first = i + 1 - w;
    double r_max = reversed[first].rssi_dbm;
    std::int64_t t_max = reversed[first].timestamp_us;
    for (std::size_t k = first + 1; k <= i; ++k) {
      if (reversed[k].rssi_dbm > r_max) {
        r_max = reversed[k].rssi_dbm;
        t_max = reversed[k].timestamp_us;
      }
    }
    const double r_current = reversed[i].rssi_dbm;
    if (r_max - r_current >= tau) return EdgeDetection{t_max, r_max, i};
  }
  return std::nullopt;
}

ForwardDetector::ForwardDetector(int window, double tau) : window_(window), tau_(tau) {
  check_window(window, tau);
}

void ForwardDetector::reset() {
  buf_.clear();
  seen_ = 0;
  fired_ = false;
}

std::optional<EdgeDetection> ForwardDetector::step(const RssiSample& sample) {
  if (fired_) return std::nullopt;
  if (!buf_.empty() && sample.timestamp_us <= buf_.back().timestamp_us) {
    throw std::invalid_argument("forward detector fed out of order");
  }
  const std::size_t index = seen_++;
  buf_.push_back(sample);
  if (buf_.size() > static_cast<std::size_t>(window_)) buf_.pop_front();
  if (buf_.size() < static_cast<std::size_t>(window_)) return std::nullopt;

  double r_max = buf_.front().rssi_dbm;
  for (auto it = std::next(buf_.begin()); it != buf_.end(); ++it) {
    if (it->rssi_dbm > r_max) r_max = it->rssi_dbm;
  }
  if (r_max - buf_.back().rssi_dbm >= tau_) {
    fired_ = true;
    const auto& edge = buf_[buf_.size() - 2];
    return EdgeDetection{edge.timestamp_us, r_max, index};
  }
  return std::nullopt;
}

std::optional<EdgeDetection> detect_right_edge_forward(std::span<const RssiSample> samples,
                                                       int window, double tau) {
  ForwardDetector det(window, tau);
  for (const auto& s : samples) {
    if (auto e = det.step(s)) return e;
  }
  return std::nullopt;
}

double compute_gait_speed(std::int64_t t_start_us, std::int64_t t_end_us, double distance_m) {
  if (t_end_us <= t_start_us) {
    throw InvalidInterval("edge interval is empty or negative (" + std::to_string(t_start_us) +
                          " -> " + std::to_string(t_end_us) + ")");
  }
  if (!(distance_m > 0.0)) throw std::invalid_argument("distance must be positive");
  return distance_m / (static_cast<double>(t_end_us - t_start_us) * 1e-6);
}

std::optional<std::int64_t> baseline_threshold_detect(std::span<const RssiSample> samples,
                                                      double threshold_dbm, ScanOrder order) {
  if (order == ScanOrder::forward) {
    for (const auto& s : samples)
      if (s.rssi_dbm >= threshold_dbm) return s.timestamp_us;
  } else {
    for (auto it = samples.rbegin(); it != samples.rend(); ++it)
      if (it->rssi_dbm >= threshold_dbm) return it->timestamp_us;
  }
  return std::nullopt;
}

std::span<const RssiSample> truncate_before(std::span<const RssiSample> samples,
                                            std::int64_t cutoff_us) {
  auto end = std::partition_point(samples.begin(), samples.end(), [&](const RssiSample& s) {
    return s.timestamp_us < cutoff_us;
  });
  return samples.first(static_cast<std::size_t>(end - samples.begin()));
}

EdgePair offline_reference_edges(std::span<const RssiSample> entry,
                                 std::span<const RssiSample> exit,
                                 const DetectionParams& params) {
  validate(params);
  if (exit.empty()) throw ReferenceUnavailable("exit trace is empty");
  auto start = detect_right_edge_reversed(truncate_before(entry, exit.front().timestamp_us),
                                          params.w1, params.tau1);
  if (!start) throw ReferenceUnavailable("no entry edge");
  auto end = detect_right_edge_forward(exit, params.w2, params.tau2);
  if (!end) throw ReferenceUnavailable("no exit edge");
  return {start->edge_timestamp_us, end->edge_timestamp_us};
}

std::optional<EdgePair> baseline_edges(std::span<const RssiSample> entry,
                                       std::span<const RssiSample> exit, double threshold_dbm) {
  if (exit.empty()) return std::nullopt;
  auto start = baseline_threshold_detect(truncate_before(entry, exit.front().timestamp_us),
                                         threshold_dbm, ScanOrder::reverse);
  auto end = baseline_threshold_detect(exit, threshold_dbm, ScanOrder::forward);
  if (!start || !end) return std::nullopt;
  return EdgePair{*start, *end};
}

}  // namespace gaitspeed
