#include "gaitspeed/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace gaitspeed {

namespace {

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

std::chrono::microseconds seconds_field(const json& obj, const char* key,
                                        std::chrono::microseconds fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  double s = it->get<double>();
  if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError(std::string("'") + key + "' must be >= 0");
  return std::chrono::microseconds(static_cast<std::int64_t>(std::llround(s * 1e6)));
}

}  // namespace

std::string_view to_string(AntennaRole r) {
  switch (r) {
    case AntennaRole::entry: return "entry";
    case AntennaRole::exit: return "exit";
    case AntennaRole::ignored: return "ignored";
  }
  return "ignored";
}

AntennaRole parse_role(std::string_view s) {
  if (s == "entry") return AntennaRole::entry;
  if (s == "exit") return AntennaRole::exit;
  if (s == "ignored") return AntennaRole::ignored;
  throw ConfigError("unknown antenna role '" + std::string(s) + "'");
}

ordered_json roles_to_json(const AntennaRoles& roles) {
  ordered_json j = ordered_json::object();
  for (const auto& [port, role] : roles) j[std::to_string(port)] = std::string(to_string(role));
  return j;
}

AntennaRoles roles_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("antennas must map port numbers to roles");
  AntennaRoles roles;
  int entries = 0, exits = 0;
  for (const auto& [key, value] : j.items()) {
    int port = 0;
    try {
      std::size_t used = 0;
      port = std::stoi(key, &used);
      if (used != key.size() || port < 1) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ConfigError("antenna port must be a positive integer: '" + key + "'");
    }
    if (!value.is_string()) throw ConfigError("antenna role must be a string");
    auto role = parse_role(value.get<std::string>());
    entries += role == AntennaRole::entry;
    exits += role == AntennaRole::exit;
    roles[port] = role;
  }
  if (entries == 0 || exits == 0) throw ConfigError("need at least one entry and one exit antenna");
  return roles;
}

ServiceConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto version = j.find("schemaVersion");
  if (version == j.end() || !version->is_number_integer())
    throw ConfigError("missing integer schemaVersion");
  if (version->get<int>() != kConfigSchemaVersion)
    throw ConfigError("unsupported schemaVersion " + version->dump());

  ServiceConfig c;
  if (auto it = j.find("tags"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("tags must map labels to EPCs");
    for (const auto& [label, epc] : it->items()) {
      if (!epc.is_string()) throw ConfigError("EPC for " + label + " must be a string");
      try {
        auto tag = make_tag_identity(label, epc.get<std::string>());
        for (const auto& [l, e] : c.tags)
          if (e == tag.epc) throw ConfigError("duplicate EPC " + tag.epc);
        c.tags.emplace(tag.label, tag.epc);
      } catch (const ValidationError& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (auto it = j.find("antennas"); it != j.end()) c.roles = roles_from_json(*it);
  if (auto it = j.find("detection"); it != j.end()) {
    try {
      c.params = params_from_json(*it);
      validate(c.params);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("detection: ") + e.what());
    }
  }
  if (auto it = j.find("session"); it != j.end()) {
    const auto& s = *it;
    c.session.cooldown = seconds_field(s, "cooldownS", c.session.cooldown);
    c.session.idle_timeout = seconds_field(s, "idleTimeoutS", c.session.idle_timeout);
    c.session.entry_buffer_capacity =
        get_or<std::size_t>(s, "entryBufferCapacity", c.session.entry_buffer_capacity);
    if (c.session.entry_buffer_capacity < 2) throw ConfigError("entryBufferCapacity must be >= 2");
    if (auto f = s.find("exitTriggerFloorDbm"); f != s.end() && !f->is_null()) {
      if (!f->is_number()) throw ConfigError("exitTriggerFloorDbm must be a number or null");
      c.session.exit_trigger_floor_dbm = f->get<double>();
    }
    c.inbox_capacity = get_or<std::size_t>(s, "inboxCapacity", c.inbox_capacity);
    if (c.inbox_capacity == 0) throw ConfigError("inboxCapacity must be > 0");
  }
  if (auto it = j.find("wire"); it != j.end()) {
    const auto& w = *it;
    if (auto k = w.find("keys"); k != w.end()) {
      c.wire.epc = get_or<std::string>(*k, "epc", c.wire.epc);
      c.wire.antenna_port = get_or<std::string>(*k, "antennaPort", c.wire.antenna_port);
      c.wire.timestamp_us = get_or<std::string>(*k, "timestampUs", c.wire.timestamp_us);
      c.wire.rssi = get_or<std::string>(*k, "rssi", c.wire.rssi);
    }
    c.wire.batch = get_or<std::string>(w, "batchKey", c.wire.batch);
  }
  if (auto it = j.find("server"); it != j.end()) {
    const auto& s = *it;
    c.server.host = get_or<std::string>(s, "host", c.server.host);
    c.server.port = get_or<unsigned short>(s, "port", c.server.port);
    c.server.data_dir = get_or<std::string>(s, "dataDir", c.server.data_dir.string());
    auto hb = seconds_field(s, "heartbeatS", c.server.heartbeat_interval);
    c.server.heartbeat_interval = std::chrono::duration_cast<std::chrono::milliseconds>(hb);
    c.server.max_missed_pongs = get_or<int>(s, "maxMissedPongs", c.server.max_missed_pongs);
    c.server.subscriber_queue = get_or<std::size_t>(s, "subscriberQueue", c.server.subscriber_queue);
    c.server.push_send_buffer = get_or<int>(s, "pushSendBufferBytes", c.server.push_send_buffer);
    if (c.server.subscriber_queue == 0) throw ConfigError("subscriberQueue must be > 0");
  }
  return c;
}

ordered_json config_to_json(const ServiceConfig& c) {
  ordered_json j;
  j["schemaVersion"] = kConfigSchemaVersion;
  ordered_json tags = ordered_json::object();
  for (const auto& [label, epc] : c.tags) tags[label] = epc;
  j["tags"] = tags;
  j["antennas"] = roles_to_json(c.roles);
  j["detection"] = params_to_json(c.params);
  ordered_json s;
  s["cooldownS"] = std::chrono::duration<double>(c.session.cooldown).count();
  s["idleTimeoutS"] = std::chrono::duration<double>(c.session.idle_timeout).count();
  s["entryBufferCapacity"] = c.session.entry_buffer_capacity;
  s["exitTriggerFloorDbm"] = c.session.exit_trigger_floor_dbm
                                 ? ordered_json(*c.session.exit_trigger_floor_dbm)
                                 : ordered_json(nullptr);
  s["inboxCapacity"] = c.inbox_capacity;
  j["session"] = s;
  ordered_json keys;
  keys["epc"] = c.wire.epc;
  keys["antennaPort"] = c.wire.antenna_port;
  keys["timestampUs"] = c.wire.timestamp_us;
  keys["rssi"] = c.wire.rssi;
  j["wire"] = {{"keys", keys}, {"batchKey", c.wire.batch}};
  ordered_json srv;
  srv["host"] = c.server.host;
  srv["port"] = c.server.port;
  srv["dataDir"] = c.server.data_dir.string();
  srv["heartbeatS"] = std::chrono::duration<double>(c.server.heartbeat_interval).count();
  srv["maxMissedPongs"] = c.server.max_missed_pongs;
  srv["subscriberQueue"] = c.server.subscriber_queue;
  srv["pushSendBufferBytes"] = c.server.push_send_buffer;
  j["server"] = srv;
  return j;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return config_from_json(j);
}

void save_config(const ServiceConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << config_to_json(c).dump(2) << '\n';
}

EngineOptions engine_options(const ServiceConfig& c) {
  EngineOptions o;
  o.params = c.params;
  o.roles = c.roles;
  o.session = c.session;
  o.inbox_capacity = c.inbox_capacity;
  return o;
}

}  // namespace gaitspeed
