#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "gaitspeed/broadcast.hpp"
#include "gaitspeed/config.hpp"
#include "gaitspeed/engine.hpp"
#include "gaitspeed/trial_log.hpp"

namespace gaitspeed {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// HTTP + push-channel front end.
///
///   POST   /api/reads          read batch from the reader
///   GET    /api/tags           registered tags with pipeline status
///   POST   /api/tags           register {"label","epc"}
///   DELETE /api/tags/{label}
///   GET    /api/config         detection parameters and antenna roles
///   PUT    /api/config
///   GET    /api/trials         ?tag=&limit=&since=&until=
///   GET    /api/stats          routing counters
///   GET    /ws/results         push channel (websocket upgrade)
///
/// Completed trials are appended to the trial log and broadcast; the
/// gateway registers itself as an engine sink on construction.
class Gateway {
 public:
  /// `config_path`, when set, is rewritten after tag or config changes.
  Gateway(Engine& engine, TrialLog& log, ServiceConfig config,
          std::optional<std::filesystem::path> config_path = std::nullopt);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and starts serving on `threads` I/O threads. Port 0 picks an
  /// ephemeral port; see port().
  void start(int threads = 2);
  void stop();
  unsigned short port() const;

  /// Request routing without the network layer.
  HttpResponse handle(std::string_view method, std::string_view target, std::string_view body);

  Broadcaster& broadcaster() { return broadcaster_; }
  std::size_t publish(const TrialResult& result);

  struct Impl;

 private:
  struct SinkGuard;

  HttpResponse post_reads(std::string_view body);
  HttpResponse get_tags();
  HttpResponse post_tag(std::string_view body);
  HttpResponse delete_tag(std::string_view label);
  HttpResponse get_config();
  HttpResponse put_config(std::string_view body);
  HttpResponse get_trials(std::string_view query);
  HttpResponse get_stats();
  void persist_config();

  Engine& engine_;
  TrialLog& log_;
  Broadcaster broadcaster_;
  std::mutex config_mutex_;
  ServiceConfig config_;
  std::optional<std::filesystem::path> config_path_;
  std::shared_ptr<SinkGuard> sink_guard_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gaitspeed
