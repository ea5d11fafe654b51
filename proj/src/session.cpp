#include "gaitspeed/session.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <vector>

namespace gaitspeed {

WallTime wall_now() {
  return std::chrono::time_point_cast<std::chrono::microseconds>(WallClock::now());
}

bool is_valid_epc(std::string_view epc) {
  return epc.size() == 24 &&
         std::all_of(epc.begin(), epc.end(), [](unsigned char c) { return std::isxdigit(c); });
}

TagIdentity make_tag_identity(std::string label, std::string epc) {
  if (label.empty()) throw ValidationError("tag label must not be empty");
  if (!is_valid_epc(epc)) throw ValidationError("EPC must be 24 hexadecimal characters: '" + epc + "'");
  return {std::move(label), std::move(epc)};
}

Classification classify_result(double speed_mps) {
  if (!(speed_mps >= 0.0) || !std::isfinite(speed_mps))
    throw std::invalid_argument("speed must be finite and non-negative");
  if (speed_mps == 0.0) return Classification::system_failure;
  if (speed_mps < kMinClinicalSpeed || speed_mps > kMaxClinicalSpeed)
    return Classification::erroneous;
  return Classification::success;
}

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::success: return "success";
    case Classification::erroneous: return "erroneous";
    case Classification::system_failure: return "systemFailure";
  }
  return "systemFailure";
}

std::optional<Classification> parse_classification(std::string_view s) {
  if (s == "success") return Classification::success;
  if (s == "erroneous") return Classification::erroneous;
  if (s == "systemFailure") return Classification::system_failure;
  return std::nullopt;
}

std::string_view to_string(SessionPhase p) {
  switch (p) {
    case SessionPhase::idle: return "idle";
    case SessionPhase::accumulating: return "accumulating";
    case SessionPhase::exit_tracking: return "exitTracking";
    case SessionPhase::cooldown: return "cooldown";
  }
  return "idle";
}

TagSession::TagSession(TagIdentity tag, SessionSettings settings, Clock clock)
    : tag_(std::move(tag)), settings_(std::move(settings)), clock_(std::move(clock)) {
  if (settings_.entry_buffer_capacity < 2)
    throw std::invalid_argument("entry buffer capacity must be >= 2");
}

void TagSession::reset_to_idle() {
  phase_ = SessionPhase::idle;
  entry_.clear();
  exit_detector_.reset();
  t_start_us_.reset();
  cooldown_until_us_.reset();
  last_exit_us_.reset();
  entry_count_ = 0;
  exit_count_ = 0;
}

void TagSession::enter_cooldown(std::int64_t now_us) {
  reset_to_idle();
  phase_ = SessionPhase::cooldown;
  cooldown_until_us_ = now_us + settings_.cooldown.count();
}

TrialResult TagSession::make_result(std::optional<std::int64_t> t_end, double speed) {
  TrialResult r;
  r.tag = tag_;
  r.t_start_us = t_start_us_;
  r.t_end_us = t_end;
  r.speed_mps = speed;
  r.classification = classify_result(speed);
  r.entry_sample_count = entry_count_;
  r.exit_sample_count = exit_count_;
  r.completed_at = clock_();
  r.params_snapshot = params_;
  return r;
}

TrialResult TagSession::fail_and_cool_down(std::int64_t now_us) {
  auto r = make_result(std::nullopt, 0.0);
  enter_cooldown(now_us);
  return r;
}

std::optional<TrialResult> TagSession::process(const TagRead& read, AntennaRole role,
                                               const DetectionParams& current_params) {
  if (role == AntennaRole::ignored) {
    ++dropped_;
    return std::nullopt;
  }
  if (phase_ == SessionPhase::cooldown) {
    if (read.timestamp_us < *cooldown_until_us_) {
      ++dropped_;
      return std::nullopt;
    }
    reset_to_idle();
  }

  const RssiSample sample{read.timestamp_us, read.rssi_dbm};

  if (role == AntennaRole::entry) {
    switch (phase_) {
      case SessionPhase::idle:
        params_ = current_params;
        phase_ = SessionPhase::accumulating;
        [[fallthrough]];
      case SessionPhase::accumulating:
        if (!entry_.empty() && sample.timestamp_us <= entry_.back().timestamp_us) {
          ++dropped_;
          return std::nullopt;
        }
        entry_.push_back(sample);
        if (entry_.size() > settings_.entry_buffer_capacity) entry_.pop_front();
        last_read_us_ = std::max(last_read_us_.value_or(read.timestamp_us), read.timestamp_us);
        return std::nullopt;
      default:
        // Entry reads after the exit trigger belong to no trial.
        ++dropped_;
        return std::nullopt;
    }
  }

  // Exit antenna.
  if (phase_ == SessionPhase::idle || phase_ == SessionPhase::accumulating) {
    if (settings_.exit_trigger_floor_dbm && read.rssi_dbm < *settings_.exit_trigger_floor_dbm) {
      ++dropped_;
      return std::nullopt;
    }
    if (phase_ == SessionPhase::idle) params_ = current_params;
    last_read_us_ = std::max(last_read_us_.value_or(read.timestamp_us), read.timestamp_us);

    std::vector<RssiSample> entry(entry_.begin(), entry_.end());
    auto usable = truncate_before(entry, read.timestamp_us);
    entry_count_ = static_cast<int>(usable.size());
    auto start = detect_right_edge_reversed(usable, params_.w1, params_.tau1);
    if (!start) return fail_and_cool_down(read.timestamp_us);

    t_start_us_ = start->edge_timestamp_us;
    entry_.clear();
    phase_ = SessionPhase::exit_tracking;
    exit_detector_.emplace(params_.w2, params_.tau2);
  } else if (phase_ == SessionPhase::exit_tracking) {
    if (last_exit_us_ && read.timestamp_us <= *last_exit_us_) {
      ++dropped_;
      return std::nullopt;
    }
    last_read_us_ = std::max(last_read_us_.value_or(read.timestamp_us), read.timestamp_us);
  }

  last_exit_us_ = read.timestamp_us;
  ++exit_count_;
  auto end = exit_detector_->step(sample);
  if (!end) return std::nullopt;

  double speed = 0.0;
  try {
    speed = compute_gait_speed(*t_start_us_, end->edge_timestamp_us, params_.distance_m);
  } catch (const InvalidInterval&) {
    return fail_and_cool_down(read.timestamp_us);
  }
  auto r = make_result(end->edge_timestamp_us, speed);
  enter_cooldown(read.timestamp_us);
  return r;
}

std::optional<TrialResult> TagSession::check_idle(std::int64_t now_us) {
  if (!active() || !last_read_us_) return std::nullopt;
  if (now_us - *last_read_us_ <= settings_.idle_timeout.count()) return std::nullopt;
  return expire();
}

std::optional<TrialResult> TagSession::expire() {
  if (!active()) return std::nullopt;
  if (phase_ == SessionPhase::accumulating) entry_count_ = static_cast<int>(entry_.size());
  auto r = make_result(std::nullopt, 0.0);
  reset_to_idle();
  return r;
}

}  // namespace gaitspeed
