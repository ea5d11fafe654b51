#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gaitspeed/session.hpp"

namespace gaitspeed {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline constexpr std::size_t kMaxBatchReads = 10'000;

/// Key names used for read records on the wire. Readers from different
/// vendors name these fields differently; the service maps them here.
struct WireKeys {
  std::string epc = "epc";
  std::string antenna_port = "antennaPort";
  std::string timestamp_us = "timestampUs";
  std::string rssi = "rssi";
  // Envelope key when the batch is posted as an object instead of an array.
  std::string batch = "reads";

  friend bool operator==(const WireKeys&, const WireKeys&) = default;
};

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BatchTooLarge : public WireError {
 public:
  using WireError::WireError;
};

/// Parses a posted batch. Rejects the whole batch (WireError) if any record
/// is malformed, and throws BatchTooLarge above kMaxBatchReads records.
/// The returned reads are stably sorted by timestamp.
std::vector<TagRead> parse_read_batch(std::string_view body, const WireKeys& keys = {});

ordered_json read_to_json(const TagRead& read, const WireKeys& keys = {});
TagRead read_from_json(const json& j, const WireKeys& keys = {});

/// Shortest round-trip decimal form with at least three decimals.
std::string format_speed(double speed_mps);

std::string format_rfc3339(WallTime t);
/// Accepts "YYYY-MM-DDTHH:MM:SS[.ffffff](Z|+hh:mm|-hh:mm)".
WallTime parse_rfc3339(std::string_view s);

ordered_json params_to_json(const DetectionParams& p);
/// Throws WireError on missing/mistyped fields; does not validate ranges.
DetectionParams params_from_json(const json& j);

/// One trial-log line (no trailing newline).
std::string trial_to_log_line(const TrialResult& r);
/// Push-channel message for a completed trial.
std::string result_message(const TrialResult& r);
/// Accepts both log lines and push messages.
TrialResult trial_from_json(const json& j);

}  // namespace gaitspeed
