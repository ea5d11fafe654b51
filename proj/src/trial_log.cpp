#include "gaitspeed/trial_log.hpp"

#include <algorithm>
#include <fstream>

#include <spdlog/spdlog.h>

#include "gaitspeed/wire.hpp"

namespace gaitspeed {

LoadedTrials read_trial_log(const std::filesystem::path& path, const TrialFilter& filter) {
  LoadedTrials out;
  if (!std::filesystem::exists(path)) return out;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trial log " + path.string());

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    try {
      if (j.is_discarded()) throw WireError("not JSON");
      auto r = trial_from_json(j);
      if (filter.tag && r.tag.label != *filter.tag && r.tag.epc != *filter.tag) continue;
      if (filter.since && r.completed_at < *filter.since) continue;
      if (filter.until && r.completed_at > *filter.until) continue;
      out.trials.push_back(std::move(r));
    } catch (const std::exception& e) {
      ++out.skipped_lines;
      spdlog::warn("{}:{}: skipping unreadable trial record ({})", path.string(), lineno, e.what());
    }
  }
  if (in.bad()) throw std::runtime_error("error reading trial log " + path.string());

  std::reverse(out.trials.begin(), out.trials.end());
  if (filter.limit && out.trials.size() > *filter.limit) out.trials.resize(*filter.limit);
  return out;
}

TrialLog::TrialLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void TrialLog::append(const TrialResult& result) {
  const std::string line = trial_to_log_line(result) + '\n';
  std::lock_guard lk(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot open trial log " + path_.string());
  out << line;
  out.flush();
  if (!out) throw std::runtime_error("write to trial log failed: " + path_.string());
}

LoadedTrials TrialLog::load(const TrialFilter& filter) const {
  std::lock_guard lk(mutex_);
  return read_trial_log(path_, filter);
}

}  // namespace gaitspeed
