#include <fstream>

#include "stratus/execserver.hpp"

namespace stratus::exec {

using nlohmann::json;

const char* to_string(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::program_error: return "program_error";
    case Status::tool_error: return "tool_error";
    case Status::timeout: return "timeout";
    case Status::server_error: return "server_error";
  }
  return "server_error";
}

Status parse_status(const std::string& text) {
  for (Status s : {Status::ok, Status::program_error, Status::tool_error, Status::timeout, Status::server_error})
    if (text == to_string(s)) return s;
  throw Error("protocol_error", "unknown status '" + text + "'");
}

json ExecRequest::to_json() const {
  json j = {{"protocol", kProtocol},
            {"request_id", request_id},
            {"program_source", program_source},
            {"language", language},
            {"dataset_refs", dataset_refs}};
  if (timeout_ms) j["timeout_ms"] = *timeout_ms;
  if (max_steps) j["budget"] = {{"max_steps", *max_steps}};
  return j;
}

ExecRequest ExecRequest::from_json(const json& j) {
  auto bad = [](const std::string& m) { return Error("bad_request", m); };
  if (!j.is_object()) throw bad("request must be a JSON object");
  if (j.contains("protocol") && j["protocol"] != kProtocol)
    throw Error("protocol_mismatch", "expected protocol " + std::string(kProtocol));
  ExecRequest r;
  if (!j.contains("request_id") || !j["request_id"].is_string()) throw bad("request_id must be a string");
  if (!j.contains("program_source") || !j["program_source"].is_string())
    throw bad("program_source must be a string");
  r.request_id = j["request_id"];
  r.program_source = j["program_source"];
  if (j.contains("language")) {
    if (!j["language"].is_string()) throw bad("language must be a string");
    r.language = j["language"];
    if (r.language != "toolplan" && r.language != "external") throw bad("language must be toolplan or external");
  }
  if (j.contains("dataset_refs")) {
    if (!j["dataset_refs"].is_array()) throw bad("dataset_refs must be a list");
    for (const auto& d : j["dataset_refs"]) {
      if (!d.is_string()) throw bad("dataset_refs must hold strings");
      r.dataset_refs.push_back(d);
    }
  }
  if (j.contains("timeout_ms")) {
    if (!j["timeout_ms"].is_number_integer() || j["timeout_ms"].get<std::int64_t>() <= 0)
      throw bad("timeout_ms must be a positive integer");
    r.timeout_ms = j["timeout_ms"].get<std::int64_t>();
  }
  if (j.contains("budget")) {
    const auto& b = j["budget"];
    if (!b.is_object()) throw bad("budget must be an object");
    if (b.contains("max_steps")) {
      if (!b["max_steps"].is_number_unsigned() || b["max_steps"].get<std::uint64_t>() == 0)
        throw bad("budget.max_steps must be a positive integer");
      r.max_steps = b["max_steps"].get<std::uint64_t>();
    }
    if (b.contains("max_wall_ms")) {
      if (!b["max_wall_ms"].is_number_integer() || b["max_wall_ms"].get<std::int64_t>() <= 0)
        throw bad("budget.max_wall_ms must be a positive integer");
      if (!r.timeout_ms) r.timeout_ms = b["max_wall_ms"].get<std::int64_t>();
    }
  }
  return r;
}

json ExecResult::to_json() const {
  json j = {{"request_id", request_id},
            {"status", to_string(status)},
            {"stdout_capture", stdout_capture},
            {"wall_ms", wall_ms}};
  if (value_text) j["value_text"] = *value_text;
  if (error) j["error"] = {{"code", error->code}, {"message", error->message}, {"line", error->line}, {"col", error->col}};
  return j;
}

ExecResult ExecResult::from_json(const json& j) {
  try {
    ExecResult r;
    r.request_id = j.at("request_id").get<std::string>();
    r.status = parse_status(j.at("status").get<std::string>());
    r.stdout_capture = j.value("stdout_capture", std::string());
    r.wall_ms = j.value("wall_ms", std::int64_t{0});
    if (j.contains("value_text")) r.value_text = j["value_text"].get<std::string>();
    if (j.contains("error")) {
      const auto& e = j["error"];
      r.error = ErrorInfo{e.at("code").get<std::string>(), e.value("message", std::string()), e.value("line", 0),
                          e.value("col", 0)};
    }
    if ((r.status == Status::ok) == r.error.has_value() || (r.status == Status::ok) != r.value_text.has_value())
      throw Error("protocol_error", "result must carry exactly one of value_text and error");
    return r;
  } catch (const json::exception& e) {
    throw Error("protocol_error", std::string("malformed result: ") + e.what());
  }
}

json WorkerRegistration::to_json() const {
  return {{"worker_id", worker_id}, {"language", language}, {"callback", callback}, {"max_jobs", max_jobs}};
}

WorkerRegistration WorkerRegistration::from_json(const json& j) {
  try {
    WorkerRegistration w;
    w.worker_id = j.at("worker_id").get<std::string>();
    w.language = j.value("language", std::string("external"));
    w.callback = j.at("callback").get<std::string>();
    w.max_jobs = j.value("max_jobs", std::size_t{1});
    if (w.worker_id.empty() || w.callback.empty() || w.max_jobs == 0)
      throw Error("bad_request", "worker_id, callback and max_jobs >= 1 are required");
    return w;
  } catch (const json::exception& e) {
    throw Error("bad_request", std::string("malformed worker registration: ") + e.what());
  }
}

LoadedConfig parse_server_config(const json& j, const std::filesystem::path& base_dir) {
  auto bad = [](const std::string& m) { return Error("bad_config", m); };
  if (!j.is_object()) throw bad("config must be a JSON object");
  LoadedConfig out;
  ServerConfig& c = out.server;
  try {
    if (j.contains("bind")) {
      const std::string bind = j["bind"];
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw bad("bind must be host:port");
      c.host = bind.substr(0, colon);
      const std::string port = bind.substr(colon + 1);
      if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5)
        throw bad("bad port in bind '" + bind + "'");
      c.port = std::stoi(port);
      if (c.port > 65535) throw bad("bad port in bind '" + bind + "'");
    }
    if (j.contains("pools")) {
      for (const auto& [name, cap] : j["pools"].items()) {
        bool known = false;
        for (auto k : {plan::ToolKind::geolocator, plan::ToolKind::forecaster, plan::ToolKind::simulator,
                       plan::ToolKind::dataset})
          if (name == plan::to_string(k)) {
            if (!cap.is_number_unsigned() || cap.get<std::size_t>() == 0) throw bad("pool capacity must be >= 1");
            c.pools[k] = cap.get<std::size_t>();
            known = true;
          }
        if (!known) throw bad("unknown pool '" + name + "'");
      }
    }
    c.pool_wait_ms = j.value("pool_wait_ms", c.pool_wait_ms);
    c.default_timeout_ms = j.value("default_timeout_ms", c.default_timeout_ms);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.http_threads = j.value("http_threads", c.http_threads);
    if (c.pool_wait_ms <= 0 || c.default_timeout_ms <= 0 || c.max_steps == 0 || c.http_threads == 0)
      throw bad("timeouts, max_steps and http_threads must be positive");

    if (j.contains("catalog")) {
      std::filesystem::path p = j["catalog"].get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      out.catalog = std::make_shared<const catalog::Catalog>(catalog::load_catalog(p));
    } else if (j.contains("datasets")) {
      json manifest = {{"version", j.value("version", std::string("config"))},
                       {"primary", j.value("primary", std::string("obs"))},
                       {"geojson", j.value("geojson", std::string("data/world.geojson"))},
                       {"datasets", j["datasets"]}};
      out.catalog = std::make_shared<const catalog::Catalog>(catalog::load_catalog(manifest, base_dir));
    } else {
      throw bad("config needs a catalog path or a datasets list");
    }
  } catch (const json::exception& e) {
    throw bad(std::string("malformed config: ") + e.what());
  }
  return out;
}

LoadedConfig load_server_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("bad_config", "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("bad_config", "config is not JSON: " + std::string(e.what()));
  }
  return parse_server_config(j, path.parent_path());
}

}  // namespace stratus::exec
