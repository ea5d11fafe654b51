#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "gaitspeed/session.hpp"
#include "gaitspeed/wire.hpp"

namespace gaitspeed {

inline constexpr std::int64_t kDefaultBatchWindowUs = 100'000;

/// Groups chronological reads into consecutive windows of `window_us`
/// measured from the first read. Empty windows produce no batch.
std::vector<std::vector<TagRead>> make_batches(const std::vector<TagRead>& reads,
                                               std::int64_t window_us = kDefaultBatchWindowUs);

struct ReplayOptions {
  std::string endpoint = "http://127.0.0.1:8080";  // scheme://host:port
  double time_scale = 1.0;  // 0 sends back to back
  std::int64_t batch_window_us = kDefaultBatchWindowUs;
  int retries = 3;
  std::chrono::milliseconds retry_delay{200};
  std::chrono::seconds timeout{5};
  WireKeys keys{};
};

struct ReplayReport {
  std::size_t batches_total = 0;
  std::size_t batches_sent = 0;
  std::size_t reads_sent = 0;
  bool aborted = false;
  std::string error;
};

/// POSTs the reads to `endpoint`/api/reads. Connection failures are retried
/// `retries` times; after that, or on a rejected batch, the replay stops and
/// the report says how far it got.
ReplayReport replay(const std::vector<TagRead>& reads, const ReplayOptions& options);

}  // namespace gaitspeed
