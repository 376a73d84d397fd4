// arcon: operator CLI for the hub, plus the `serve` and `agent` launchers.
//
// Exit codes: 0 ok, 1 infrastructure, 2 registration, 3 pairing,
// 4 argument, 5 device error.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include "arcon/agents/runtime.hpp"
#include "arcon/hub/api.hpp"
#include "arcon/hub/hub.hpp"

namespace fs = std::filesystem;
using namespace arcon;

namespace {

struct Failure {
  int code;
};

[[noreturn]] void fail(const Error& e) {
  std::cerr << "error: " << to_string(e.kind()) << ": " << e.message() << "\n";
  throw Failure{exit_code_for(e.kind())};
}

class HubClient {
 public:
  explicit HubClient(const std::string& hub, bool streaming = false) : address_(hub) {
    const auto hp = pairnet::parse_host_port(hub);
    client_ = std::make_unique<httplib::Client>(hp.host, hp.port);
    client_->set_connection_timeout(2, 0);
    client_->set_read_timeout(streaming ? 24 * 3600 : 30, 0);
  }

  Json get(const std::string& path) { return unwrap(client_->Get(path)); }
  Json del(const std::string& path) { return unwrap(client_->Delete(path)); }
  Json post(const std::string& path, const Json& body) {
    return unwrap(client_->Post(path, canonical_dump(body), "application/json"));
  }
  Json post_raw(const std::string& path, const std::string& body, const std::string& type) {
    return unwrap(client_->Post(path, body, type));
  }
  Json post_form(const std::string& path, const httplib::MultipartFormDataItems& items) {
    return unwrap(client_->Post(path, items));
  }

  /// Streams response lines to `on_line` until the server ends the response.
  void stream(const std::string& path, const std::function<void(const std::string&)>& on_line) {
    std::string buf;
    int status = 0;
    std::string error_body;
    auto res = client_->Get(
        path,
        [&](const httplib::Response& r) {
          status = r.status;
          return true;
        },
        [&](const char* data, std::size_t len) {
          if (status != 200) {
            error_body.append(data, len);
            return true;
          }
          buf.append(data, len);
          std::size_t nl;
          while ((nl = buf.find('\n')) != std::string::npos) {
            if (nl > 0) on_line(buf.substr(0, nl));
            buf.erase(0, nl + 1);
          }
          return true;
        });
    if (!res) unreachable(res.error());
    if (status != 200) raise(status, error_body);
  }

 private:
  [[noreturn]] void unreachable(httplib::Error err) {
    fail(Error(ErrorKind::Unreachable, "hub unreachable at " + address_ + " (" + httplib::to_string(err) + ")"));
  }

  [[noreturn]] static void raise(int status, const std::string& body) {
    Json j;
    try {
      j = Json::parse(body);
    } catch (const Json::exception&) {
      fail(Error(ErrorKind::TransportFailure, "HTTP " + std::to_string(status) + ": " + body));
    }
    ErrorKind kind = ErrorKind::TransportFailure;
    error_kind_from_string(j.value("error", ""), kind);
    const Error e(kind, j.value("message", "HTTP " + std::to_string(status)), j.value("detail", Json()));
    if (e.kind() == ErrorKind::InsufficientDetail && e.detail().contains("reports")) {
      for (const auto& r : e.detail()["reports"]) {
        std::cerr << "image " << r.value("index", 0) << ": detail " << std::fixed << std::setprecision(4)
                  << r.value("score", 0.0) << " threshold " << r.value("threshold", 0.0) << " "
                  << (r.value("pass", false) ? "PASS" : "FAIL") << "\n";
      }
    }
    if (!e.detail().is_null()) std::cerr << "detail: " << canonical_dump(e.detail()) << "\n";
    fail(e);
  }

  Json unwrap(const httplib::Result& res) {
    if (!res) unreachable(res.error());
    if (res->status >= 400) raise(res->status, res->body);
    try {
      return Json::parse(res->body);
    } catch (const Json::exception& e) {
      fail(Error(ErrorKind::TransportFailure, std::string("hub sent invalid JSON: ") + e.what()));
    }
  }

  std::string address_;
  std::unique_ptr<httplib::Client> client_;
};

void print(const Json& j) { std::cout << canonical_dump(j) << "\n"; }

int parse_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size() || v < INT32_MIN || v > INT32_MAX) throw std::out_of_range(s);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    fail(Error(ErrorKind::InvalidArgument, std::string(what) + " must be an integer, got '" + s + "'"));
  }
}

Json load_json_file(const std::string& path) {
  try {
    return Json::parse(read_file_bytes(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, path + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigInvalid, e.message());
  }
}

// Blocks until SIGINT or SIGTERM. Signals must already be masked.
void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  logger()->info("event=signal signal={}", sig);
}

void mask_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

Command control_command(const std::string& action, const std::vector<std::string>& args) {
  auto need = [&](std::size_t n) {
    if (args.size() != n) {
      fail(Error(ErrorKind::InvalidArgument,
                 action + " takes " + std::to_string(n) + " argument(s), got " + std::to_string(args.size())));
    }
  };
  if (action == "power-on") return need(0), Command{cmd::PowerOn{}};
  if (action == "power-off") return need(0), Command{cmd::PowerOff{}};
  if (action == "status") return need(0), Command{cmd::GetStatus{}};
  if (action == "set-volume") return need(1), Command{cmd::SetVolume{parse_int(args[0], "level")}};
  if (action == "play") return need(1), Command{cmd::PlayTrack{args[0]}};
  if (action == "stop") return need(0), Command{cmd::StopTrack{}};
  if (action == "move-cursor") {
    need(2);
    return cmd::MoveCursor{parse_int(args[0], "dx"), parse_int(args[1], "dy")};
  }
  fail(Error(ErrorKind::InvalidArgument, "unknown action '" + action +
                                             "' (power-on, power-off, status, set-volume, play, stop, move-cursor)"));
}

std::string describe(const Command& c, const Json& state) {
  switch (name_of(c)) {
    case CommandName::PowerOn:
    case CommandName::PowerOff: return "ok power=" + state.value("power", "?");
    case CommandName::SetVolume: return "ok volume=" + std::to_string(state.value("volume", -1));
    case CommandName::PlayTrack:
    case CommandName::StopTrack:
      return "ok now_playing=" + (state["now_playing"].is_string() ? state["now_playing"].get<std::string>() : "none");
    case CommandName::MoveCursor:
      return "ok cursor=" + std::to_string(state["cursor"].value("x", 0)) + "," +
             std::to_string(state["cursor"].value("y", 0));
    default: return canonical_dump(state);
  }
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arcon: register, recognize and control devices through the hub"};
  app.require_subcommand(1);
  std::string hub = "127.0.0.1:7420";
  bool json_out = false;
  app.add_option("--hub", hub, "hub API address host:port")->envname("ARCON_HUB");
  app.add_flag("--json", json_out, "print full JSON results");

  auto* reg = app.add_subcommand("register", "register a device from 1-6 PGM photos");
  std::string name, kind = "Generic", address, caps;
  std::vector<std::string> images;
  reg->add_option("--name", name, "display name")->required();
  reg->add_option("--kind", kind, "Speaker, Laptop or Generic");
  reg->add_option("--address", address, "agent address")->required();
  reg->add_option("--capabilities", caps, "comma-separated command kinds (default: all for the kind)");
  reg->add_option("images", images, "PGM files")->required();

  auto* devices = app.add_subcommand("devices", "list registered devices");

  auto* remove = app.add_subcommand("remove", "unregister a device");
  std::string device_id;
  remove->add_option("device_id", device_id)->required();

  auto* scan = app.add_subcommand("scan", "recognize registered devices in a PGM frame");
  std::string frame_path;
  scan->add_option("frame", frame_path)->required();

  auto* control = app.add_subcommand("control", "send a command to a device");
  std::string action;
  std::vector<std::string> action_args;
  control->add_option("device_id", device_id)->required();
  control->add_option("action", action)->required();
  control->add_option("args", action_args);
  control->allow_extras(false);

  auto* status = app.add_subcommand("status", "query a device's live state");
  status->add_option("device_id", device_id)->required();

  auto* view = app.add_subcommand("view", "print the current view model");

  auto* frame = app.add_subcommand("frame", "save the frame currently being scanned");
  std::string frame_out;
  frame->add_option("output", frame_out)->required();

  auto* transfer = app.add_subcommand("transfer", "send bytes from one device to another");
  std::string src, dst, label;
  std::int64_t total_bytes = 0;
  bool wait = false;
  transfer->add_option("src", src)->required();
  transfer->add_option("dst", dst)->required();
  transfer->add_option("--bytes", total_bytes)->required();
  transfer->add_option("--label", label);
  transfer->add_flag("--wait", wait, "block until the job finishes");

  auto* events = app.add_subcommand("events", "print hub events, one JSON object per line");
  std::string ev_device;
  std::uint64_t since = 0;
  std::size_t limit = 0;
  bool follow = false;
  events->add_option("--device", ev_device);
  events->add_option("--since", since, "only events with seq greater than this");
  events->add_option("--limit", limit, "stop after this many events");
  events->add_flag("--follow,-f", follow, "keep streaming new events");

  auto* move = app.add_subcommand("move", "move an endpoint in the simulated layout");
  double x = 0, y = 0;
  move->add_option("address", address)->required();
  move->add_option("x_m", x)->required();
  move->add_option("y_m", y)->required();

  auto* serve = app.add_subcommand("serve", "run the hub");
  std::string config_path;
  serve->add_option("config,--config", config_path, "hub config JSON")->required();

  auto* agent = app.add_subcommand("agent", "run one virtual device");
  agent->add_option("config,--config", config_path, "agent config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 4;
  }

  try {
    if (serve->parsed()) {
      mask_signals();
      const Json j = load_json_file(config_path);
      hub::Hub h(hub::hub_config_from_json(j, fs::path(config_path).parent_path()));
      h.start();
      hub::ApiServer api(h, h.config().api_listen);
      api.start();
      wait_for_signal();
      api.stop();
      h.stop();
      return 0;
    }
    if (agent->parsed()) {
      mask_signals();
      auto cfg = agents::agent_config_from_json(load_json_file(config_path));
      cfg.reconnect = true;
      agents::AgentRuntime a(cfg);
      a.start();
      logger()->info("agent={} event=started kind={} hub={}", cfg.address, to_string(cfg.kind), cfg.hub.str());
      wait_for_signal();
      a.stop();
      return 0;
    }

    if (reg->parsed()) {
      httplib::MultipartFormDataItems items{
          {"name", name, "", ""}, {"kind", kind, "", ""}, {"address", address, "", ""}};
      if (!caps.empty()) items.push_back({"capabilities", caps, "", ""});
      for (const auto& p : images) {
        std::string bytes;
        try {
          bytes = read_file_bytes(p);
        } catch (const Error& e) {
          fail(Error(ErrorKind::MalformedImage, e.message()));
        }
        items.push_back({"image", bytes, fs::path(p).filename().string(), "image/x-portable-graymap"});
      }
      const Json rec = HubClient(hub).post_form("/devices", items);
      if (json_out) {
        print(rec);
      } else {
        std::cout << rec.at("device_id").get<std::string>() << "\n";
      }
    } else if (devices->parsed()) {
      print(HubClient(hub).get("/devices"));
    } else if (remove->parsed()) {
      const Json rec = HubClient(hub).del("/devices/" + device_id);
      if (json_out) {
        print(rec);
      } else {
        std::cout << "removed " << rec.value("device_id", device_id) << "\n";
      }
    } else if (scan->parsed()) {
      std::string bytes;
      try {
        bytes = read_file_bytes(frame_path);
      } catch (const Error& e) {
        fail(Error(ErrorKind::InvalidArgument, e.message()));
      }
      for (const auto& r : HubClient(hub).post_raw("/scan", bytes, "image/x-portable-graymap")) {
        if (json_out) {
          print(r);
        } else {
          print(Json{{"device_id", r["device_id"]}, {"bbox", r["bbox"]}, {"score", round4(r["score"].get<double>())}});
        }
      }
    } else if (control->parsed()) {
      const Command c = control_command(action, action_args);
      const Json res = HubClient(hub).post("/devices/" + device_id + "/commands", arcon::to_json(c));
      if (json_out) {
        print(res);
      } else {
        std::cout << describe(c, res.at("state")) << "\n";
      }
    } else if (status->parsed()) {
      print(HubClient(hub).get("/devices/" + device_id + "/state"));
    } else if (view->parsed()) {
      print(HubClient(hub).get("/view"));
    } else if (frame->parsed()) {
      const auto hp = pairnet::parse_host_port(hub);
      httplib::Client cli(hp.host, hp.port);
      auto res = cli.Get("/frame/current");
      if (!res) fail(Error(ErrorKind::Unreachable, "hub unreachable at " + hub));
      if (res->status != 200) fail(Error(ErrorKind::TransportFailure, "no current frame"));
      write_pgm(frame_out, decode_pgm(res->body));
      std::cerr << "wrote " << frame_out << "\n";
    } else if (transfer->parsed()) {
      HubClient client(hub);
      Json job = client.post("/transfers", Json{{"src", src}, {"dst", dst}, {"label", label}, {"total_bytes", total_bytes}});
      if (wait) {
        while (job.value("state", "") == "Running") {
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
          job = client.get("/transfers/" + job.at("job_id").get<std::string>());
        }
      }
      print(job);
      if (job.value("state", "") == "Failed") {
        ErrorKind k = ErrorKind::TransportFailure;
        error_kind_from_string(job.value("error", ""), k);
        return exit_code_for(k);
      }
    } else if (events->parsed()) {
      std::string path = "/events?since=" + std::to_string(since) + "&follow=" + (follow ? "1" : "0");
      if (!ev_device.empty()) path += "&device_id=" + ev_device;
      if (limit) path += "&limit=" + std::to_string(limit);
      HubClient(hub, follow).stream(path, [](const std::string& line) { std::cout << line << "\n" << std::flush; });
    } else if (move->parsed()) {
      print(HubClient(hub).post("/endpoints/" + address + "/position", Json{{"x_m", x}, {"y_m", y}}));
    }
    return 0;
  } catch (const Failure& f) {
    return f.code;
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.message() << "\n";
    return exit_code_for(e.kind());
  }
}
