#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gaitspeed/session.hpp"

namespace gaitspeed {

class RegistrationConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using AntennaRoles = std::map<int, AntennaRole>;

struct EngineOptions {
  DetectionParams params{};
  AntennaRoles roles{{1, AntennaRole::entry}, {2, AntennaRole::exit}};
  SessionSettings session{};
  std::size_t inbox_capacity = 1024;
  // Runs on the tag's pipeline thread before each read is processed.
  std::function<void(const TagIdentity&, const TagRead&)> before_process;
};

struct CompletedTrial {
  TrialResult result;
  // When the read that completed the trial entered the engine; for
  // wall-clock expiries, the moment of expiry.
  std::chrono::steady_clock::time_point trigger_received{};
};

using ResultSink = std::function<void(const CompletedTrial&)>;

enum class RouteOutcome { accepted, ignored };

struct RouteCounters {
  std::uint64_t accepted = 0;
  std::uint64_t unknown_epc = 0;
  std::uint64_t ignored_port = 0;
  std::uint64_t overflow = 0;

  std::uint64_t ignored() const { return unknown_epc + ignored_port + overflow; }
  std::uint64_t submitted() const { return accepted + ignored(); }
};

struct TagStatus {
  TagIdentity tag;
  SessionPhase phase = SessionPhase::idle;
  std::uint64_t accepted = 0;
  std::uint64_t overflow = 0;
  std::uint64_t trials = 0;
  std::size_t pending = 0;
  std::optional<std::int64_t> last_read_us;
};

/// Routes reads to per-tag pipelines. Each registered tag owns a bounded
/// inbox and one worker thread that exclusively owns its TagSession.
class Engine {
 public:
  explicit Engine(EngineOptions options = {});
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Throws ValidationError or RegistrationConflict.
  TagIdentity register_tag(std::string label, std::string epc);
  bool unregister_tag(const std::string& label);
  std::vector<TagStatus> tags() const;
  std::optional<TagIdentity> find_by_label(const std::string& label) const;

  /// Never blocks on a tag pipeline.
  RouteOutcome route_read(const TagRead& read);

  void add_sink(ResultSink sink);

  DetectionParams params() const;
  AntennaRoles roles() const;
  /// Validates, then applies to trials that start afterwards.
  void set_params(const DetectionParams& params);
  void set_roles(AntennaRoles roles);

  RouteCounters counters() const;
  std::uint64_t overflow_for(const std::string& label) const;

  /// Stops a tag's worker from taking reads off its inbox (test harnesses).
  void pause_tag(const std::string& label, bool paused);

  /// Blocks until every inbox is drained and no read is mid-processing.
  bool wait_idle(std::chrono::milliseconds timeout) const;

 private:
  class Pipeline;

  void emit(const CompletedTrial& trial);

  EngineOptions options_;

  mutable std::shared_mutex registry_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Pipeline>> by_epc_;
  std::map<std::string, std::string> epc_by_label_;

  mutable std::shared_mutex config_mutex_;
  DetectionParams params_;
  AntennaRoles roles_;

  std::mutex sinks_mutex_;
  std::vector<ResultSink> sinks_;

  std::atomic<std::uint64_t> accepted_{0};
  std::atomic<std::uint64_t> unknown_epc_{0};
  std::atomic<std::uint64_t> ignored_port_{0};
  std::atomic<std::uint64_t> overflow_{0};
};

}  // namespace gaitspeed
