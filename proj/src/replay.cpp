#include "gaitspeed/replay.hpp"

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace gaitspeed {

std::vector<std::vector<TagRead>> make_batches(const std::vector<TagRead>& reads, std::int64_t window_us) {
  if (window_us <= 0) throw std::invalid_argument("batch window must be > 0");
  std::vector<std::vector<TagRead>> out;
  if (reads.empty()) return out;
  const std::int64_t t0 = reads.front().timestamp_us;
  std::int64_t current = -1;
  for (const auto& r : reads) {
    if (r.timestamp_us < t0) throw std::invalid_argument("reads are not chronological");
    const std::int64_t idx = (r.timestamp_us - t0) / window_us;
    if (idx < current) throw std::invalid_argument("reads are not chronological");
    if (idx != current) {
      out.emplace_back();
      current = idx;
    }
    out.back().push_back(r);
  }
  return out;
}

ReplayReport replay(const std::vector<TagRead>& reads, const ReplayOptions& opt) {
  if (opt.time_scale < 0) throw std::invalid_argument("time scale must be >= 0");
  ReplayReport report;
  const auto batches = make_batches(reads, opt.batch_window_us);
  report.batches_total = batches.size();
  if (batches.empty()) return report;

  httplib::Client client(opt.endpoint);
  if (!client.is_valid()) {
    report.aborted = true;
    report.error = "invalid endpoint: " + opt.endpoint;
    return report;
  }
  client.set_connection_timeout(opt.timeout);
  client.set_read_timeout(opt.timeout);
  client.set_write_timeout(opt.timeout);
  client.set_keep_alive(true);
  client.set_tcp_nodelay(true);

  const auto start = std::chrono::steady_clock::now();
  const std::int64_t t0 = batches.front().front().timestamp_us;

  for (const auto& batch : batches) {
    if (opt.time_scale > 0) {
      // Window-aligned send times so pacing does not drift.
      const std::int64_t offset = (batch.front().timestamp_us - t0) / opt.batch_window_us * opt.batch_window_us;
      std::this_thread::sleep_until(
          start + std::chrono::microseconds(static_cast<std::int64_t>(static_cast<double>(offset) * opt.time_scale)));
    }
    ordered_json body = ordered_json::array();
    for (const auto& r : batch) body.push_back(read_to_json(r, opt.keys));
    const std::string payload = body.dump();

    bool sent = false;
    for (int attempt = 0; attempt <= opt.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(opt.retry_delay);
      auto res = client.Post("/api/reads", payload, "application/json");
      if (!res) {
        report.error = "connection failed: " + httplib::to_string(res.error());
        spdlog::warn("batch {}: {} (attempt {}/{})", report.batches_sent, report.error, attempt + 1,
                     opt.retries + 1);
        continue;
      }
      if (res->status >= 500) {
        report.error = "server error " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        report.error = "batch rejected with " + std::to_string(res->status) + ": " + res->body;
        report.aborted = true;
        return report;
      }
      sent = true;
      break;
    }
    if (!sent) {
      report.aborted = true;
      return report;
    }
    ++report.batches_sent;
    report.reads_sent += batch.size();
  }
  report.error.clear();
  return report;
}

}  // namespace gaitspeed
