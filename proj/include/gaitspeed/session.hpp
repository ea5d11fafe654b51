#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "gaitspeed/detection.hpp"

namespace gaitspeed {

using WallClock = std::chrono::system_clock;
using WallTime = std::chrono::time_point<WallClock, std::chrono::microseconds>;

WallTime wall_now();

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

bool is_valid_epc(std::string_view epc);

struct TagIdentity {
  std::string label;
  std::string epc;  // 24 hex chars

  friend bool operator==(const TagIdentity&, const TagIdentity&) = default;
};

/// Throws ValidationError on an empty label or malformed EPC.
TagIdentity make_tag_identity(std::string label, std::string epc);

enum class AntennaRole { entry, exit, ignored };

struct TagRead {
  std::string epc;
  int antenna_port = 0;
  std::int64_t timestamp_us = 0;
  double rssi_dbm = 0.0;

  friend bool operator==(const TagRead&, const TagRead&) = default;
};

enum class Classification { success, erroneous, system_failure };

inline constexpr double kMinClinicalSpeed = 0.2;
inline constexpr double kMaxClinicalSpeed = 2.0;

/// 0 is a system failure, [0.2, 2.0] m/s a success, anything else erroneous.
/// Throws std::invalid_argument on negative or non-finite speeds.
Classification classify_result(double speed_mps);

std::string_view to_string(Classification c);
std::optional<Classification> parse_classification(std::string_view s);

struct TrialResult {
  TagIdentity tag;
  std::optional<std::int64_t> t_start_us;
  std::optional<std::int64_t> t_end_us;
  double speed_mps = 0.0;
  Classification classification = Classification::system_failure;
  int entry_sample_count = 0;
  int exit_sample_count = 0;
  WallTime completed_at{};
  DetectionParams params_snapshot{};

  friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

struct SessionSettings {
  std::chrono::microseconds cooldown{std::chrono::seconds(10)};
  std::chrono::microseconds idle_timeout{std::chrono::seconds(120)};
  std::size_t entry_buffer_capacity = 4096;
  // Exit reads weaker than this never start exit tracking. Disabled by default.
  std::optional<double> exit_trigger_floor_dbm;
};

enum class SessionPhase { idle, accumulating, exit_tracking, cooldown };
std::string_view to_string(SessionPhase p);

/// Per-tag trial state machine.
///
/// Entry reads accumulate until the first exit read, which runs reversed
/// detection over the buffered entry trace. Exit reads then feed the forward
/// detector until it fires and a result is emitted. After any result the
/// session drops reads until the cooldown expires (reader time).
///
/// Not thread-safe; one owner at a time.
class TagSession {
 public:
  using Clock = std::function<WallTime()>;

  TagSession(TagIdentity tag, SessionSettings settings, Clock clock = wall_now);

  /// `current_params` is snapshotted when a new trial starts; a trial in
  /// flight keeps the parameters it started with.
  std::optional<TrialResult> process(const TagRead& read, AntennaRole role,
                                     const DetectionParams& current_params);

  /// Emits a failure if an active trial has seen no reads for the idle
  /// timeout as of reader time `now_us`.
  std::optional<TrialResult> check_idle(std::int64_t now_us);

  /// Unconditionally abandons an active trial as a failure (wall-clock idle).
  std::optional<TrialResult> expire();

  SessionPhase phase() const { return phase_; }
  const TagIdentity& tag() const { return tag_; }
  std::size_t entry_buffer_size() const { return entry_.size(); }
  std::optional<std::int64_t> t_start_us() const { return t_start_us_; }
  std::optional<std::int64_t> last_read_us() const { return last_read_us_; }
  std::optional<std::int64_t> cooldown_until_us() const { return cooldown_until_us_; }
  std::uint64_t dropped_reads() const { return dropped_; }
  bool active() const {
    return phase_ == SessionPhase::accumulating || phase_ == SessionPhase::exit_tracking;
  }

 private:
  TrialResult make_result(std::optional<std::int64_t> t_end, double speed);
  TrialResult fail_and_cool_down(std::int64_t now_us);
  void enter_cooldown(std::int64_t now_us);
  void reset_to_idle();

  TagIdentity tag_;
  SessionSettings settings_;
  Clock clock_;

  SessionPhase phase_ = SessionPhase::idle;
  std::deque<RssiSample> entry_;
  std::optional<ForwardDetector> exit_detector_;
  DetectionParams params_{};
  std::optional<std::int64_t> t_start_us_;
  std::optional<std::int64_t> last_read_us_;
  std::optional<std::int64_t> cooldown_until_us_;
  std::optional<std::int64_t> last_exit_us_;
  int entry_count_ = 0;
  int exit_count_ = 0;
  std::uint64_t dropped_ = 0;
};

}  // namespace gaitspeed
