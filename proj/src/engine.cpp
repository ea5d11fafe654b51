#include "gaitspeed/engine.hpp"

#include <condition_variable>
#include <deque>
#include <thread>

#include <spdlog/spdlog.h>

namespace gaitspeed {

namespace {

struct Envelope {
  TagRead read;
  AntennaRole role = AntennaRole::ignored;
  std::chrono::steady_clock::time_point received;
};

}  // namespace

class Engine::Pipeline {
 public:
  Pipeline(Engine& engine, TagIdentity tag, const SessionSettings& settings, std::size_t capacity)
      : engine_(engine),
        session_(tag, settings),
        tag_(std::move(tag)),
        idle_timeout_(settings.idle_timeout),
        capacity_(capacity),
        worker_([this](std::stop_token st) { run(st); }) {}

  ~Pipeline() { stop(); }

  bool try_push(Envelope env) {
    {
      std::lock_guard lk(m_);
      if (inbox_.size() >= capacity_) {
        ++overflow_;
        return false;
      }
      inbox_.push_back(std::move(env));
      ++accepted_;
    }
    cv_.notify_one();
    return true;
  }

  void stop() {
    {
      std::lock_guard lk(m_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  void set_paused(bool paused) {
    {
      std::lock_guard lk(m_);
      paused_ = paused;
    }
    cv_.notify_all();
  }

  bool idle() const {
    std::lock_guard lk(m_);
    return inbox_.empty() && !busy_;
  }

  TagStatus status() const {
    std::lock_guard lk(m_);
    TagStatus s;
    s.tag = tag_;
    s.phase = phase_;
    s.accepted = accepted_;
    s.overflow = overflow_;
    s.trials = trials_;
    s.pending = inbox_.size();
    s.last_read_us = last_read_us_;
    return s;
  }

  std::uint64_t overflow() const {
    std::lock_guard lk(m_);
    return overflow_;
  }

  const TagIdentity& tag() const { return tag_; }

 private:
  void run(std::stop_token) {
    for (;;) {
      Envelope env;
      {
        std::unique_lock lk(m_);
        auto ready = [&] { return stopping_ || (!paused_ && !inbox_.empty()); };
        if (session_.active()) {
          if (!cv_.wait_for(lk, idle_timeout_, ready)) {
            lk.unlock();
            if (auto r = session_.expire()) publish(*r, std::chrono::steady_clock::now());
            lk.lock();
            phase_ = session_.phase();
            continue;
          }
        } else {
          cv_.wait(lk, ready);
        }
        if (stopping_) return;
        env = std::move(inbox_.front());
        inbox_.pop_front();
        busy_ = true;
      }

      try {
        if (engine_.options_.before_process) engine_.options_.before_process(tag_, env.read);
        const auto params = engine_.params();
        if (auto r = session_.check_idle(env.read.timestamp_us)) publish(*r, env.received);
        if (auto r = session_.process(env.read, env.role, params)) publish(*r, env.received);
      } catch (const std::exception& e) {
        spdlog::error("pipeline {}: {}", tag_.label, e.what());
      }

      std::lock_guard lk(m_);
      busy_ = false;
      phase_ = session_.phase();
      last_read_us_ = session_.last_read_us();
    }
  }

  void publish(const TrialResult& r, std::chrono::steady_clock::time_point received) {
    {
      std::lock_guard lk(m_);
      ++trials_;
    }
    engine_.emit(CompletedTrial{r, received});
  }

  Engine& engine_;
  TagSession session_;
  TagIdentity tag_;
  std::chrono::microseconds idle_timeout_;
  std::size_t capacity_;

  mutable std::mutex m_;
  std::condition_variable cv_;
  std::deque<Envelope> inbox_;
  bool paused_ = false;
  bool stopping_ = false;
  bool busy_ = false;
  SessionPhase phase_ = SessionPhase::idle;
  std::optional<std::int64_t> last_read_us_;
  std::uint64_t accepted_ = 0;
  std::uint64_t overflow_ = 0;
  std::uint64_t trials_ = 0;

  std::jthread worker_;  // last: starts after every other member exists
};

Engine::Engine(EngineOptions options)
    : options_(std::move(options)), params_(options_.params), roles_(options_.roles) {
  validate(params_);
  if (options_.inbox_capacity == 0) throw std::invalid_argument("inbox capacity must be > 0");
}

Engine::~Engine() {
  std::unordered_map<std::string, std::shared_ptr<Pipeline>> pipelines;
  {
    std::unique_lock lk(registry_mutex_);
    pipelines.swap(by_epc_);
    epc_by_label_.clear();
  }
  for (auto& [epc, p] : pipelines) p->stop();
}

TagIdentity Engine::register_tag(std::string label, std::string epc) {
  auto tag = make_tag_identity(std::move(label), std::move(epc));
  std::unique_lock lk(registry_mutex_);
  if (epc_by_label_.contains(tag.label))
    throw RegistrationConflict("label already registered: " + tag.label);
  if (by_epc_.contains(tag.epc)) throw RegistrationConflict("EPC already registered: " + tag.epc);
  by_epc_.emplace(tag.epc, std::make_shared<Pipeline>(*this, tag, options_.session,
                                                      options_.inbox_capacity));
  epc_by_label_.emplace(tag.label, tag.epc);
  return tag;
}

bool Engine::unregister_tag(const std::string& label) {
  std::shared_ptr<Pipeline> victim;
  {
    std::unique_lock lk(registry_mutex_);
    auto it = epc_by_label_.find(label);
    if (it == epc_by_label_.end()) return false;
    auto p = by_epc_.find(it->second);
    victim = p->second;
    by_epc_.erase(p);
    epc_by_label_.erase(it);
  }
  victim->stop();
  return true;
}

std::vector<TagStatus> Engine::tags() const {
  std::shared_lock lk(registry_mutex_);
  std::vector<TagStatus> out;
  out.reserve(epc_by_label_.size());
  for (const auto& [label, epc] : epc_by_label_) out.push_back(by_epc_.at(epc)->status());
  return out;
}

std::optional<TagIdentity> Engine::find_by_label(const std::string& label) const {
  std::shared_lock lk(registry_mutex_);
  auto it = epc_by_label_.find(label);
  if (it == epc_by_label_.end()) return std::nullopt;
  return TagIdentity{label, it->second};
}

RouteOutcome Engine::route_read(const TagRead& read) {
  AntennaRole role = AntennaRole::ignored;
  {
    std::shared_lock lk(config_mutex_);
    if (auto it = roles_.find(read.antenna_port); it != roles_.end()) role = it->second;
  }

  std::shared_ptr<Pipeline> pipeline;
  {
    std::shared_lock lk(registry_mutex_);
    auto it = by_epc_.find(read.epc);
    if (it != by_epc_.end()) pipeline = it->second;
  }
  if (!pipeline) {
    ++unknown_epc_;
    return RouteOutcome::ignored;
  }
  if (role == AntennaRole::ignored) {
    ++ignored_port_;
    return RouteOutcome::ignored;
  }
  if (!pipeline->try_push(Envelope{read, role, std::chrono::steady_clock::now()})) {
    ++overflow_;
    return RouteOutcome::ignored;
  }
  ++accepted_;
  return RouteOutcome::accepted;
}

void Engine::add_sink(ResultSink sink) {
  std::lock_guard lk(sinks_mutex_);
  sinks_.push_back(std::move(sink));
}

void Engine::emit(const CompletedTrial& trial) {
  std::vector<ResultSink> sinks;
  {
    std::lock_guard lk(sinks_mutex_);
    sinks = sinks_;
  }
  for (auto& s : sinks) {
    try {
      s(trial);
    } catch (const std::exception& e) {
      spdlog::error("result sink failed: {}", e.what());
    }
  }
}

DetectionParams Engine::params() const {
  std::shared_lock lk(config_mutex_);
  return params_;
}

AntennaRoles Engine::roles() const {
  std::shared_lock lk(config_mutex_);
  return roles_;
}

void Engine::set_params(const DetectionParams& params) {
  validate(params);
  std::unique_lock lk(config_mutex_);
  params_ = params;
}

void Engine::set_roles(AntennaRoles roles) {
  std::unique_lock lk(config_mutex_);
  roles_ = std::move(roles);
}

RouteCounters Engine::counters() const {
  return {accepted_.load(), unknown_epc_.load(), ignored_port_.load(), overflow_.load()};
}

std::uint64_t Engine::overflow_for(const std::string& label) const {
  std::shared_lock lk(registry_mutex_);
  auto it = epc_by_label_.find(label);
  if (it == epc_by_label_.end()) return 0;
  return by_epc_.at(it->second)->overflow();
}

void Engine::pause_tag(const std::string& label, bool paused) {
  std::shared_ptr<Pipeline> p;
  {
    std::shared_lock lk(registry_mutex_);
    auto it = epc_by_label_.find(label);
    if (it == epc_by_label_.end()) return;
    p = by_epc_.at(it->second);
  }
  p->set_paused(paused);
}

bool Engine::wait_idle(std::chrono::milliseconds timeout) const {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    bool all_idle = true;
    {
      std::shared_lock lk(registry_mutex_);
      for (const auto& [epc, p] : by_epc_) {
        if (!p->idle()) {
          all_idle = false;
          break;
        }
      }
    }
    if (all_idle) return true;
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

}  // namespace gaitspeed
