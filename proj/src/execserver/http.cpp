#include <spdlog/spdlog.h>

#include "httplib.h"
#include "stratus/execserver.hpp"

namespace stratus::exec {

using nlohmann::json;

namespace {

constexpr const char* kProtocolHeader = "X-Stratus-Protocol";

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_header(kProtocolHeader, kProtocol);
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  reply(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace

// ---------------------------------------------------------------------------
// Server

Server::Server(ServerConfig cfg, std::shared_ptr<const catalog::Catalog> cat)
    : exec_(std::move(cfg), std::move(cat)), http_(std::make_unique<httplib::Server>()) {
  const std::size_t threads = exec_.config().http_threads;
  http_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  // Wraps handlers that run work: counts them in flight and refuses new
  // ones while draining.
  auto guarded = [this](auto body) {
    return [this, body](const httplib::Request& req, httplib::Response& res) {
      ++in_flight_;
      struct Done {
        Server* s;
        ~Done() {
          std::lock_guard lock(s->drain_mu_);
          --s->in_flight_;
          s->drain_cv_.notify_all();
        }
      } done{this};
      if (draining_) return reply_error(res, 503, "shutting_down", "server is draining");
      json j;
      try {
        j = json::parse(req.body);
      } catch (const json::exception& e) {
        return reply_error(res, 400, "bad_request", std::string("body is not JSON: ") + e.what());
      }
      try {
        body(j, res);
      } catch (const Error& e) {
        reply_error(res, 400, e.code(), e.what());
      }
    };
  };

  http_->Post("/execute", guarded([this](const json& j, httplib::Response& res) {
                const ExecRequest req = ExecRequest::from_json(j);
                reply(res, 200, exec_.execute(req).to_json());
              }));
  http_->Post("/tools/call", guarded([this](const json& j, httplib::Response& res) {
                if (!j.is_object()) throw Error("bad_request", "tool call must be a JSON object");
                reply(res, 200, exec_.tool_call(j).to_json());
              }));
  http_->Post("/workers", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto w = WorkerRegistration::from_json(json::parse(req.body));
      exec_.register_worker(w);
      reply(res, 200, {{"registered", w.worker_id}, {"language", w.language}});
    } catch (const json::exception& e) {
      reply_error(res, 400, "bad_request", std::string("body is not JSON: ") + e.what());
    } catch (const Error& e) {
      reply_error(res, 400, e.code(), e.what());
    }
  });
  http_->Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, draining_ ? 503 : 200, {{"status", draining_ ? "draining" : "ok"}, {"protocol", kProtocol}});
  });
  http_->Get("/catalog", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, exec_.catalog_json());
  });
}

Server::~Server() {
  if (thread_.joinable()) {
    http_->stop();
    thread_.join();
  }
}

void Server::start() {
  const auto& cfg = exec_.config();
  if (cfg.port == 0) {
    port_ = http_->bind_to_any_port(cfg.host);
    if (port_ <= 0) throw Error("bind_failed", "cannot bind " + cfg.host);
  } else {
    if (!http_->bind_to_port(cfg.host, cfg.port))
      throw Error("bind_failed", "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    port_ = cfg.port;
  }
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  spdlog::info("serving on {}", endpoint());
}

std::string Server::endpoint() const { return "http://" + exec_.config().host + ":" + std::to_string(port_); }

void Server::shutdown() {
  draining_ = true;
  {
    std::unique_lock lock(drain_mu_);
    drain_cv_.wait(lock, [&] { return in_flight_ == 0; });
  }
  if (thread_.joinable()) {
    http_->stop();
    thread_.join();
  }
}

// ---------------------------------------------------------------------------
// Client

Client::Client(std::string endpoint, int timeout_s) : timeout_s_(timeout_s) {
  const std::string prefix = "http://";
  if (endpoint.rfind(prefix, 0) == 0) endpoint = endpoint.substr(prefix.size());
  while (!endpoint.empty() && endpoint.back() == '/') endpoint.pop_back();
  const auto colon = endpoint.rfind(':');
  try {
    if (colon == std::string::npos) {
      host_ = endpoint;
    } else {
      host_ = endpoint.substr(0, colon);
      port_ = std::stoi(endpoint.substr(colon + 1));
    }
  } catch (const std::exception&) {
    throw Error("bad_endpoint", "cannot parse endpoint '" + endpoint + "'");
  }
  if (host_.empty()) throw Error("bad_endpoint", "endpoint has no host");
}

namespace {

json decode(const httplib::Result& res, const std::string& what) {
  if (!res) throw Error("connection_failed", what + ": " + httplib::to_string(res.error()));
  if (res->get_header_value(kProtocolHeader) != kProtocol)
    throw Error("protocol_error", what + ": protocol version mismatch");
  json j;
  try {
    j = json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error("protocol_error", what + ": reply is not JSON");
  }
  if (res->status != 200) {
    const std::string code = j.contains("error") ? j["error"].value("code", "http_error") : "http_error";
    const std::string msg = j.contains("error") ? j["error"].value("message", "") : "";
    throw Error(res->status == 503 ? "shutting_down" : code,
                what + ": HTTP " + std::to_string(res->status) + " " + msg);
  }
  return j;
}

}  // namespace

json Client::post(const std::string& path, const std::string& body) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(timeout_s_, 0);
  cli.set_write_timeout(timeout_s_, 0);
  return decode(cli.Post(path, body, "application/json"), "POST " + path);
}

json Client::get(const std::string& path) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(timeout_s_, 0);
  return decode(cli.Get(path), "GET " + path);
}

ExecResult Client::execute(const ExecRequest& req) { return ExecResult::from_json(post("/execute", req.to_json().dump())); }

json Client::catalog() { return get("/catalog"); }

bool Client::healthy() {
  try {
    return get("/healthz").value("status", "") == "ok";
  } catch (const Error&) {
    return false;
  }
}

void Client::register_worker(const WorkerRegistration& w) { post("/workers", w.to_json().dump()); }

ExecResult Client::tool_call(const json& call) { return ExecResult::from_json(post("/tools/call", call.dump())); }

}  // namespace stratus::exec
