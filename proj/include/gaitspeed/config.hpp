#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "gaitspeed/engine.hpp"
#include "gaitspeed/wire.hpp"

namespace gaitspeed {

inline constexpr int kConfigSchemaVersion = 1;

struct ServerSettings {
  std::string host = "0.0.0.0";
  unsigned short port = 8080;
  std::filesystem::path data_dir = "data";
  std::chrono::milliseconds heartbeat_interval{15'000};
  int max_missed_pongs = 2;
  std::size_t subscriber_queue = 256;
  // SO_SNDBUF for push connections; 0 keeps the OS default.
  int push_send_buffer = 0;
};

/// Everything the service reads from its config file. See docs/schemas.md.
struct ServiceConfig {
  std::map<std::string, std::string> tags;  // label -> EPC
  AntennaRoles roles{{1, AntennaRole::entry}, {2, AntennaRole::exit}};
  DetectionParams params{};
  SessionSettings session{};
  std::size_t inbox_capacity = 1024;
  WireKeys wire{};
  ServerSettings server{};
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string_view to_string(AntennaRole r);
AntennaRole parse_role(std::string_view s);

ordered_json roles_to_json(const AntennaRoles& roles);
AntennaRoles roles_from_json(const json& j);

/// Missing sections keep their defaults. Throws ConfigError on an unknown
/// schemaVersion, malformed values or invalid detection parameters.
ServiceConfig config_from_json(const json& j);
ordered_json config_to_json(const ServiceConfig& c);

ServiceConfig load_config(const std::filesystem::path& path);
void save_config(const ServiceConfig& c, const std::filesystem::path& path);

EngineOptions engine_options(const ServiceConfig& c);

}  // namespace gaitspeed
