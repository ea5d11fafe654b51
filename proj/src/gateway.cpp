#include "gaitspeed/gateway.hpp"

#include <charconv>
#include <shared_mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "gaitspeed/wire.hpp"

namespace gaitspeed {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kMaxBodyBytes = 16 * 1024 * 1024;
constexpr const char* kServerName = "gaitspeed";

std::string_view sv(beast::string_view s) { return {s.data(), s.size()}; }

HttpResponse error(int status, std::string_view message) {
  ordered_json j;
  j["error"] = message;
  return {status, j.dump(), "application/json"};
}

HttpResponse ok_json(const ordered_json& j, int status = 200) { return {status, j.dump(), "application/json"}; }

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

// Percent-decoding; '+' is kept literally so RFC 3339 offsets survive.
std::optional<std::string> url_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out += s[i];
      continue;
    }
    if (i + 2 >= s.size()) return std::nullopt;
    int hi = hex_value(s[i + 1]), lo = hex_value(s[i + 2]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out += static_cast<char>(hi * 16 + lo);
    i += 2;
  }
  return out;
}

std::optional<std::map<std::string, std::string>> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  while (!q.empty()) {
    auto amp = q.find('&');
    auto part = q.substr(0, amp);
    q = amp == std::string_view::npos ? std::string_view{} : q.substr(amp + 1);
    if (part.empty()) continue;
    auto eq = part.find('=');
    auto key = url_decode(part.substr(0, eq));
    auto value = url_decode(eq == std::string_view::npos ? std::string_view{} : part.substr(eq + 1));
    if (!key || !value) return std::nullopt;
    out[*key] = *value;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

struct Gateway::Impl {
  explicit Impl(Gateway& g) : gw(g) {}

  Gateway& gw;
  ServerSettings server;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;

  std::mutex push_mutex;
  bool stopping = false;
  std::vector<Broadcaster::Id> push_ids;

  void do_accept();

  // Subscribes under push_mutex so stop() sees every push connection.
  std::optional<Broadcaster::Id> track(std::shared_ptr<Subscriber> s) {
    std::lock_guard lk(push_mutex);
    if (stopping) return std::nullopt;
    auto id = gw.broadcaster().subscribe(std::move(s));
    push_ids.push_back(id);
    return id;
  }
  void forget(Broadcaster::Id id) {
    std::lock_guard lk(push_mutex);
    std::erase(push_ids, id);
    gw.broadcaster().unsubscribe(id);
  }
};

namespace {

class PushSession : public Subscriber, public std::enable_shared_from_this<PushSession> {
 public:
  PushSession(tcp::socket socket, Gateway::Impl& impl)
      : ws_(std::move(socket)),
        impl_(impl),
        queue_(impl.server.subscriber_queue),
        ping_timer_(ws_.get_executor()) {}

  void run(http::request<http::string_body> req) {
    if (impl_.server.push_send_buffer > 0) {
      beast::error_code ec;
      beast::get_lowest_layer(ws_).socket().set_option(
          net::socket_base::send_buffer_size(impl_.server.push_send_buffer), ec);
    }
    websocket::stream_base::timeout t{};
    t.handshake_timeout = std::chrono::seconds(10);
    t.idle_timeout = websocket::stream_base::none();
    t.keep_alive_pings = false;
    ws_.set_option(t);
    ws_.set_option(websocket::stream_base::decorator(
        [](websocket::response_type& res) { res.set(http::field::server, kServerName); }));
    ws_.control_callback([this](websocket::frame_type kind, beast::string_view) {
      if (kind == websocket::frame_type::pong) missed_pongs_ = 0;
    });
    ws_.async_accept(req, beast::bind_front_handler(&PushSession::on_accept, shared_from_this()));
  }

  bool offer(SharedMessage message) override {
    if (closed_.load()) return false;
    if (!queue_.push(std::move(message))) return false;
    net::post(ws_.get_executor(), [self = shared_from_this()] { self->pump(); });
    return true;
  }

  void close(std::string_view reason) override {
    closed_ = true;
    net::post(ws_.get_executor(),
              [self = shared_from_this(), r = std::string(reason)] { self->shutdown(r); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      spdlog::debug("push handshake failed: {}", ec.message());
      return;
    }
    id_ = impl_.track(shared_from_this());
    if (!id_) return shutdown("server stopping");
    spdlog::info("push subscriber {} connected", *id_);
    do_read();
    schedule_ping();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&PushSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return shutdown(ec == websocket::error::closed ? "closed by peer" : ec.message());
    buffer_.consume(buffer_.size());
    do_read();
  }

  void pump() {
    if (writing_ || shut_) return;
    auto next = queue_.pop();
    if (!next) return;
    writing_ = true;
    current_ = std::move(*next);
    ws_.text(true);
    ws_.async_write(net::buffer(*current_),
                    beast::bind_front_handler(&PushSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    current_.reset();
    if (ec) return shutdown("write failed: " + ec.message());
    pump();
  }

  void schedule_ping() {
    ping_timer_.expires_after(impl_.server.heartbeat_interval);
    ping_timer_.async_wait(beast::bind_front_handler(&PushSession::on_ping_timer, shared_from_this()));
  }

  void on_ping_timer(beast::error_code ec) {
    if (ec || shut_) return;
    if (missed_pongs_ >= impl_.server.max_missed_pongs) return shutdown("heartbeat timeout");
    ++missed_pongs_;
    if (!ping_pending_) {
      ping_pending_ = true;
      ws_.async_ping({}, [self = shared_from_this()](beast::error_code) { self->ping_pending_ = false; });
    }
    schedule_ping();
  }

  void shutdown(const std::string& reason) {
    if (shut_) return;
    shut_ = true;
    closed_ = true;
    if (id_) {
      impl_.forget(*id_);
      spdlog::info("push subscriber {} disconnected: {}", *id_, reason);
    }
    ping_timer_.cancel();
    beast::error_code ec;
    auto& sock = beast::get_lowest_layer(ws_).socket();
    sock.shutdown(tcp::socket::shutdown_both, ec);
    sock.close(ec);
  }

  websocket::stream<beast::tcp_stream> ws_;
  Gateway::Impl& impl_;
  MessageQueue queue_;
  net::steady_timer ping_timer_;
  beast::flat_buffer buffer_;
  SharedMessage current_;
  std::optional<Broadcaster::Id> id_;
  std::atomic<bool> closed_{false};
  // Strand-confined.
  bool writing_ = false;
  bool shut_ = false;
  bool ping_pending_ = false;
  int missed_pongs_ = 0;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Gateway::Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    parser_.emplace();
    parser_->body_limit(kMaxBodyBytes);
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, *parser_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return do_close();
    if (ec == http::error::body_limit) {
      return send(error(413, "request body too large"), 11, false);
    }
    if (ec) return;

    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      auto target = sv(req.target());
      if (target.substr(0, target.find('?')) == "/ws/results") {
        stream_.expires_never();
        std::make_shared<PushSession>(stream_.release_socket(), impl_)->run(std::move(req));
        return;
      }
      return send(error(404, "no such push channel"), req.version(), false);
    }

    HttpResponse r;
    try {
      r = impl_.gw.handle(sv(req.method_string()), sv(req.target()), req.body());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", sv(req.method_string()), sv(req.target()), e.what());
      r = error(500, "internal error");
    }
    send(std::move(r), req.version(), req.keep_alive());
  }

  void send(HttpResponse r, unsigned version, bool keep_alive) {
    res_ = {};
    res_.version(version);
    res_.result(static_cast<unsigned>(r.status));
    res_.set(http::field::server, kServerName);
    if (!r.body.empty() || r.status != 204) res_.set(http::field::content_type, r.content_type);
    res_.body() = std::move(r.body);
    res_.keep_alive(keep_alive);
    res_.prepare_payload();
    http::async_write(stream_, res_,
                      beast::bind_front_handler(&HttpSession::on_write, shared_from_this(), keep_alive));
  }

  void on_write(bool keep_alive, beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!keep_alive) return do_close();
    do_read();
  }

  void do_close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  Gateway::Impl& impl_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
  http::response<http::string_body> res_;
};

}  // namespace

void Gateway::Impl::do_accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec != net::error::operation_aborted) spdlog::warn("accept: {}", ec.message());
    } else {
      beast::error_code ignore;
      socket.set_option(tcp::no_delay(true), ignore);
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    if (acceptor.is_open()) do_accept();
  });
}

// ---------------------------------------------------------------------------

// Lets engine worker threads outlive the gateway safely.
struct Gateway::SinkGuard {
  std::shared_mutex m;
  Gateway* gw = nullptr;
};

Gateway::Gateway(Engine& engine, TrialLog& log, ServiceConfig config,
                 std::optional<std::filesystem::path> config_path)
    : engine_(engine),
      log_(log),
      config_(std::move(config)),
      config_path_(std::move(config_path)),
      impl_(std::make_unique<Impl>(*this)) {
  impl_->server = config_.server;
  sink_guard_ = std::make_shared<SinkGuard>();
  sink_guard_->gw = this;
  engine_.add_sink([g = sink_guard_](const CompletedTrial& t) {
    std::shared_lock lk(g->m);
    if (g->gw) g->gw->publish(t.result);
  });
}

Gateway::~Gateway() {
  {
    std::unique_lock lk(sink_guard_->m);
    sink_guard_->gw = nullptr;
  }
  stop();
}

void Gateway::start(int threads) {
  if (!impl_->threads.empty()) throw std::logic_error("gateway already started");
  auto address = net::ip::make_address(impl_->server.host);
  tcp::endpoint ep{address, impl_->server.port};
  auto& acc = impl_->acceptor;
  acc.open(ep.protocol());
  acc.set_option(net::socket_base::reuse_address(true));
  acc.bind(ep);
  acc.listen(net::socket_base::max_listen_connections);
  impl_->do_accept();
  for (int i = 0; i < std::max(1, threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  spdlog::info("listening on {}:{}", impl_->server.host, port());
}

void Gateway::stop() {
  if (!impl_) return;
  std::vector<Broadcaster::Id> ids;
  {
    std::lock_guard lk(impl_->push_mutex);
    impl_->stopping = true;
    ids.swap(impl_->push_ids);
  }
  for (auto id : ids) broadcaster_.unsubscribe(id);
  impl_->ioc.stop();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

unsigned short Gateway::port() const {
  beast::error_code ec;
  auto ep = impl_->acceptor.local_endpoint(ec);
  return ec ? 0 : ep.port();
}

std::size_t Gateway::publish(const TrialResult& result) {
  try {
    log_.append(result);
  } catch (const std::exception& e) {
    spdlog::error("trial not persisted: {}", e.what());
  }
  return broadcaster_.broadcast(result_message(result));
}

// ---------------------------------------------------------------------------

HttpResponse Gateway::handle(std::string_view method, std::string_view target, std::string_view body) {
  auto qpos = target.find('?');
  std::string_view path = target.substr(0, qpos);
  std::string_view query = qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1);
  while (path.size() > 1 && path.back() == '/') path.remove_suffix(1);

  auto wrong_method = [&] { return error(405, std::string(method) + " not allowed on " + std::string(path)); };

  if (path == "/api/reads") return method == "POST" ? post_reads(body) : wrong_method();
  if (path == "/api/tags") {
    if (method == "GET") return get_tags();
    if (method == "POST") return post_tag(body);
    return wrong_method();
  }
  constexpr std::string_view tag_prefix = "/api/tags/";
  if (path.substr(0, tag_prefix.size()) == tag_prefix) {
    if (method != "DELETE") return wrong_method();
    auto label = url_decode(path.substr(tag_prefix.size()));
    if (!label) return error(400, "malformed tag label");
    return delete_tag(*label);
  }
  if (path == "/api/config") {
    if (method == "GET") return get_config();
    if (method == "PUT") return put_config(body);
    return wrong_method();
  }
  if (path == "/api/trials") return method == "GET" ? get_trials(query) : wrong_method();
  if (path == "/api/stats") return method == "GET" ? get_stats() : wrong_method();
  return error(404, "no such resource: " + std::string(path));
}

HttpResponse Gateway::post_reads(std::string_view body) {
  std::vector<TagRead> reads;
  try {
    reads = parse_read_batch(body, config_.wire);
  } catch (const BatchTooLarge& e) {
    return error(413, e.what());
  } catch (const WireError& e) {
    return error(400, e.what());
  }
  std::size_t accepted = 0;
  for (const auto& r : reads) accepted += engine_.route_read(r) == RouteOutcome::accepted;
  ordered_json j;
  j["received"] = reads.size();
  j["accepted"] = accepted;
  j["ignored"] = reads.size() - accepted;
  return ok_json(j);
}

HttpResponse Gateway::get_tags() {
  ordered_json arr = ordered_json::array();
  for (const auto& s : engine_.tags()) {
    ordered_json t;
    t["label"] = s.tag.label;
    t["epc"] = s.tag.epc;
    t["phase"] = to_string(s.phase);
    t["accepted"] = s.accepted;
    t["overflow"] = s.overflow;
    t["trials"] = s.trials;
    t["pending"] = s.pending;
    t["lastReadUs"] = s.last_read_us ? ordered_json(*s.last_read_us) : ordered_json(nullptr);
    arr.push_back(std::move(t));
  }
  return ok_json(arr);
}

HttpResponse Gateway::post_tag(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return error(400, "body is not valid JSON");
  if (!j.is_object()) return error(422, "expected an object with label and epc");
  auto label = j.find("label");
  auto epc = j.find("epc");
  if (label == j.end() || !label->is_string() || epc == j.end() || !epc->is_string())
    return error(422, "label and epc must be strings");
  TagIdentity tag;
  try {
    tag = engine_.register_tag(label->get<std::string>(), epc->get<std::string>());
  } catch (const ValidationError& e) {
    return error(422, e.what());
  } catch (const RegistrationConflict& e) {
    return error(409, e.what());
  }
  {
    std::lock_guard lk(config_mutex_);
    config_.tags[tag.label] = tag.epc;
    persist_config();
  }
  spdlog::info("registered tag {} ({})", tag.label, tag.epc);
  ordered_json out;
  out["label"] = tag.label;
  out["epc"] = tag.epc;
  return ok_json(out, 201);
}

HttpResponse Gateway::delete_tag(std::string_view label) {
  if (!engine_.unregister_tag(std::string(label))) return error(404, "unknown tag: " + std::string(label));
  {
    std::lock_guard lk(config_mutex_);
    config_.tags.erase(std::string(label));
    persist_config();
  }
  spdlog::info("unregistered tag {}", label);
  return {204, "", "application/json"};
}

HttpResponse Gateway::get_config() {
  auto j = params_to_json(engine_.params());
  j["antennas"] = roles_to_json(engine_.roles());
  return ok_json(j);
}

HttpResponse Gateway::put_config(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return error(400, "body is not valid JSON");
  DetectionParams params;
  std::optional<AntennaRoles> roles;
  try {
    params = params_from_json(j);
    validate(params);
    if (auto it = j.find("antennas"); it != j.end()) roles = roles_from_json(*it);
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  {
    // Held across both updates so concurrent PUTs apply whole.
    std::lock_guard lk(config_mutex_);
    engine_.set_params(params);
    config_.params = params;
    if (roles) {
      engine_.set_roles(*roles);
      config_.roles = *roles;
    }
    persist_config();
  }
  spdlog::info("detection parameters updated: {}", params_to_json(params).dump());
  return get_config();
}

HttpResponse Gateway::get_trials(std::string_view query) {
  auto q = parse_query(query);
  if (!q) return error(400, "malformed query string");
  TrialFilter filter;
  for (const auto& [key, value] : *q) {
    if (key == "tag") {
      filter.tag = value;
    } else if (key == "limit") {
      std::size_t n = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
      if (ec != std::errc{} || p != value.data() + value.size()) return error(400, "limit must be a non-negative integer");
      filter.limit = n;
    } else if (key == "since" || key == "until") {
      try {
        (key == "since" ? filter.since : filter.until) = parse_rfc3339(value);
      } catch (const std::exception& e) {
        return error(400, key + ": " + e.what());
      }
    } else {
      return error(400, "unknown query parameter: " + key);
    }
  }
  LoadedTrials loaded;
  try {
    loaded = log_.load(filter);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return error(500, "trial log unavailable");
  }
  std::string out = "[";
  for (std::size_t i = 0; i < loaded.trials.size(); ++i) {
    if (i) out += ',';
    out += trial_to_log_line(loaded.trials[i]);
  }
  out += ']';
  return {200, std::move(out), "application/json"};
}

HttpResponse Gateway::get_stats() {
  auto c = engine_.counters();
  ordered_json j;
  j["reads"] = {{"accepted", c.accepted},
                {"unknownEpc", c.unknown_epc},
                {"ignoredPort", c.ignored_port},
                {"overflow", c.overflow}};
  j["tags"] = engine_.tags().size();
  j["subscribers"] = broadcaster_.subscriber_count();
  j["droppedSubscribers"] = broadcaster_.dropped_subscribers();
  return ok_json(j);
}

void Gateway::persist_config() {
  if (!config_path_) return;
  try {
    save_config(config_, *config_path_);
  } catch (const std::exception& e) {
    spdlog::error("config not saved: {}", e.what());
  }
}

}  // namespace gaitspeed
