#pragma once

#ifndef CPPHTTPLIB_THREAD_POOL_COUNT
#define CPPHTTPLIB_THREAD_POOL_COUNT 16
#endif
#include <httplib.h>

#include <atomic>
#include <sstream>
#include <string>
#include <thread>

#include "arcon/hub/hub.hpp"

namespace arcon::hub {

inline int http_status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::UnknownDevice:
    case ErrorKind::UnknownEndpoint: return 404;
    case ErrorKind::Timeout: return 504;
    case ErrorKind::TransportFailure: return 502;
    default: break;
  }
  switch (exit_code_for(k)) {
    case 2: return 422;
    case 3: return 409;
    case 4: return 400;
    case 5: return 409;
    default: return 500;
  }
}

/// Splits "a,b , c" into trimmed non-empty items.
inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

/// HTTP front end over a running Hub. All bodies are canonical JSON except
/// GET /frame/current (PGM) and GET /events (one JSON event per line).
class ApiServer {
 public:
  ApiServer(Hub& hub, std::string listen) : hub_(hub), listen_(std::move(listen)) {
    // httplib's default adds SO_REUSEPORT, which lets a second server share the port.
    svr_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    routes();
  }
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;
  ~ApiServer() { stop(); }

  /// Binds (throwing PortUnavailable) and serves on a background thread.
  void start() {
    const auto hp = pairnet::parse_host_port(listen_);
    if (hp.port == 0) {
      port_ = svr_.bind_to_any_port(hp.host);
      if (port_ < 0) throw Error(ErrorKind::PortUnavailable, "cannot listen on " + listen_);
    } else {
      if (!svr_.bind_to_port(hp.host, hp.port)) throw Error(ErrorKind::PortUnavailable, "cannot listen on " + listen_);
      port_ = hp.port;
    }
    running_ = true;
    thread_ = std::thread([this] { svr_.listen_after_bind(); });
    // stop() is a no-op until the listen loop is running.
    svr_.wait_until_ready();
    logger()->info("api event=listening address={}:{}", hp.host, port_);
  }

  void stop() {
    if (!running_.exchange(false)) return;
    svr_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  static void send_json(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(canonical_dump(body), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) { send_json(res, e.to_json(), http_status_for(e.kind())); }

  // Wraps a handler so every failure becomes an {error,message,detail} body.
  template <typename F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const Json::exception& e) {
        send_error(res, Error(ErrorKind::InvalidArgument, std::string("bad request body: ") + e.what()));
      } catch (const std::exception& e) {
        send_error(res, Error(ErrorKind::TransportFailure, e.what()));
      }
    };
  }

  static Json parse_body(const httplib::Request& req) {
    try {
      return Json::parse(req.body);
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::InvalidArgument, std::string("body is not JSON: ") + e.what());
    }
  }

  void routes() {
    svr_.Get("/health", guarded([this](const auto&, auto& res) {
      send_json(res, Json{{"ok", true},
                          {"devices", hub_.list_devices().size()},
                          {"active_sessions", hub_.active_sessions()},
                          {"events_dropped", hub_.events().dropped()},
                          {"last_event_seq", hub_.events().last_seq()}});
    }));

    svr_.Get("/devices", guarded([this](const auto&, auto& res) {
      Json out = Json::array();
      for (const auto& d : hub_.list_devices()) out.push_back(registry::summary_json(d));
      send_json(res, out);
    }));

    svr_.Post("/devices", guarded([this](const httplib::Request& req, auto& res) {
      send_json(res, registry::summary_json(hub_.register_device(registration_from(req))), 201);
    }));

    svr_.Get(R"(/devices/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
      send_json(res, registry::summary_json(hub_.get_device(req.matches[1])));
    }));

    svr_.Delete(R"(/devices/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
      send_json(res, registry::summary_json(hub_.remove_device(req.matches[1])));
    }));

    svr_.Get(R"(/devices/([^/]+)/state)", guarded([this](const httplib::Request& req, auto& res) {
      send_json(res, to_json(hub_.snapshot(req.matches[1])));
    }));

    svr_.Post(R"(/devices/([^/]+)/commands)", guarded([this](const httplib::Request& req, auto& res) {
      const Command c = command_from_json(parse_body(req));
      send_json(res, to_json(hub_.dispatch(req.matches[1], c)));
    }));

    svr_.Post("/transfers", guarded([this](const httplib::Request& req, auto& res) {
      const Json b = parse_body(req);
      const auto job = hub_.start_transfer(b.at("src").get<std::string>(), b.at("dst").get<std::string>(),
                                           b.value("label", ""), b.at("total_bytes").get<std::int64_t>());
      send_json(res, to_json(job), 202);
    }));

    svr_.Get("/transfers", guarded([this](const auto&, auto& res) {
      Json out = Json::array();
      for (const auto& j : hub_.transfers()) out.push_back(to_json(j));
      send_json(res, out);
    }));

    svr_.Get(R"(/transfers/([^/]+))", guarded([this](const httplib::Request& req, auto& res) {
      const auto job = hub_.find_transfer(req.matches[1]);
      if (!job) {
        send_json(res, Json{{"error", "UnknownTransfer"}, {"message", "no transfer '" + std::string(req.matches[1]) + "'"}},
                  404);
        return;
      }
      send_json(res, to_json(*job));
    }));

    svr_.Get("/view", guarded([this](const auto&, auto& res) { send_json(res, to_json(*hub_.current_view())); }));

    svr_.Get("/frame/current", guarded([this](const auto&, auto& res) {
      const auto frame = hub_.current_frame();
      if (!frame) {
        send_json(res, Json{{"error", "NoFrame"}, {"message", "no frame has been scanned yet"}}, 404);
        return;
      }
      res.set_content(encode_pgm(*frame), "image/x-portable-graymap");
    }));

    svr_.Post("/scan", guarded([this](const httplib::Request& req, auto& res) {
      Json out = Json::array();
      for (const auto& r : hub_.scan(decode_pgm(req.body))) out.push_back(recognizer::to_json(r));
      send_json(res, out);
    }));

    svr_.Get("/endpoints", guarded([this](const auto&, auto& res) {
      Json topo = hub_.topology();
      topo["sessions"] = hub_.session_states();
      send_json(res, topo);
    }));

    svr_.Post(R"(/endpoints/([^/]+)/position)", guarded([this](const httplib::Request& req, auto& res) {
      const Json b = parse_body(req);
      Json out = Json::array();
      for (const auto& l : hub_.move_endpoint(req.matches[1], {b.at("x_m").get<double>(), b.at("y_m").get<double>()})) {
        out.push_back({{"address", l.address}, {"distance_m", l.distance_m}, {"in_range", l.in_range}});
      }
      send_json(res, out);
    }));

    svr_.Get("/events", guarded([this](const httplib::Request& req, auto& res) { stream_events(req, res); }));
  }

  Registration registration_from(const httplib::Request& req) const {
    if (!req.is_multipart_form_data()) throw Error(ErrorKind::InvalidArgument, "expected multipart/form-data");
    auto field = [&](const char* key) {
      return req.has_file(key) ? req.get_file_value(key).content : std::string();
    };
    Registration r;
    r.name = field("name");
    r.address = field("address");
    r.kind = parse_device_kind(field("kind").empty() ? "Generic" : field("kind"));
    if (const std::string caps = field("capabilities"); !caps.empty()) {
      CapabilitySet set;
      for (const auto& c : split_list(caps)) set.insert(parse_command_name(c));
      r.capabilities = set;
    }
    for (const auto& f : req.get_file_values("image")) {
      try {
        r.images.push_back(decode_pgm(f.content));
      } catch (const Error& e) {
        throw Error(ErrorKind::MalformedImage, "image " + std::to_string(r.images.size()) + " (" + f.filename +
                                                   "): " + e.message());
      }
    }
    return r;
  }

  // GET /events?device_id=X&since=N&limit=N&follow=0|1
  // follow=0 returns buffered history and ends; otherwise the response stays
  // open and streams new events as they are published.
  void stream_events(const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> filter;
    if (req.has_param("device_id") && !req.get_param_value("device_id").empty()) {
      filter = req.get_param_value("device_id");
    }
    std::optional<std::uint64_t> since;
    std::size_t limit = 0;
    bool follow = true;
    try {
      if (req.has_param("since")) since = std::stoull(req.get_param_value("since"));
      if (req.has_param("limit")) limit = std::stoull(req.get_param_value("limit"));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "since and limit must be non-negative integers");
    }
    if (req.has_param("follow")) follow = req.get_param_value("follow") != "0";

    if (!follow) {
      std::string body;
      std::size_t n = 0;
      for (const auto& e : hub_.events().history(filter, since.value_or(0))) {
        if (limit && n++ >= limit) break;
        body += canonical_dump(to_json(e)) + "\n";
      }
      res.set_content(body, "application/x-ndjson");
      return;
    }

    auto sub = hub_.events().subscribe(filter, since);
    auto sent = std::make_shared<std::size_t>(0);
    res.set_chunked_content_provider("application/x-ndjson", [this, sub, sent, limit](std::size_t, httplib::DataSink& sink) {
      while (running_) {
        auto e = sub->pop(std::chrono::milliseconds(250));
        if (!e) {
          if (sub->closed()) break;
          if (!sink.is_writable()) return false;
          continue;
        }
        const std::string line = canonical_dump(to_json(*e)) + "\n";
        if (!sink.write(line.data(), line.size())) return false;
        if (limit && ++*sent >= limit) break;
        return true;
      }
      sink.done();
      return true;
    });
  }

  Hub& hub_;
  std::string listen_;
  httplib::Server svr_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  int port_ = 0;
};

}  // namespace arcon::hub
