#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gaitspeed/session.hpp"

namespace gaitspeed {

struct TrialFilter {
  // Matches either the tag label or its EPC.
  std::optional<std::string> tag;
  std::optional<WallTime> since;  // inclusive, on completedAt
  std::optional<WallTime> until;  // inclusive
  std::optional<std::size_t> limit;
};

struct LoadedTrials {
  std::vector<TrialResult> trials;  // newest first
  std::size_t skipped_lines = 0;
};

/// Reads a trial log without a TrialLog instance (offline tools). Lines that
/// fail to parse, such as a partial write at the tail, are skipped and
/// counted. Throws std::runtime_error if the file exists but cannot be read.
LoadedTrials read_trial_log(const std::filesystem::path& path, const TrialFilter& filter = {});

/// Append-only JSON-lines store of completed trials.
class TrialLog {
 public:
  explicit TrialLog(std::filesystem::path path);

  /// Throws std::runtime_error on I/O failure.
  void append(const TrialResult& result);
  LoadedTrials load(const TrialFilter& filter = {}) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

}  // namespace gaitspeed
