#include <algorithm>

#include <spdlog/spdlog.h>

#include "httplib.h"
#include "stratus/execserver.hpp"

namespace stratus::exec {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// ResourcePool

ResourcePool::ResourcePool(plan::ToolKind kind, std::size_t capacity) : kind_(kind), capacity_(capacity) {
  if (capacity == 0) throw Error("bad_config", "pool capacity must be at least 1");
  for (std::size_t i = capacity; i-- > 0;) free_.push_back(i);
}

std::optional<std::size_t> ResourcePool::acquire(Clock::time_point deadline) {
  std::unique_lock lock(mu_);
  ++waiting_;
  const bool got = cv_.wait_until(lock, deadline, [&] { return !free_.empty(); });
  --waiting_;
  if (!got) return std::nullopt;
  const std::size_t slot = free_.back();
  free_.pop_back();
  ++out_;
  if (out_ > capacity_) ++violations_;
  peak_ = std::max(peak_, out_);
  return slot;
}

void ResourcePool::release(std::size_t slot) {
  {
    std::lock_guard lock(mu_);
    --out_;
    free_.push_back(slot);
  }
  cv_.notify_one();
}

std::size_t ResourcePool::free_count() const {
  std::lock_guard lock(mu_);
  return free_.size();
}

std::size_t ResourcePool::in_use() const {
  std::lock_guard lock(mu_);
  return out_;
}

std::size_t ResourcePool::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

std::size_t ResourcePool::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

std::size_t ResourcePool::waiting() const {
  std::lock_guard lock(mu_);
  return waiting_;
}

void ResourcePool::reset_peak() {
  std::lock_guard lock(mu_);
  peak_ = out_;
}

// ---------------------------------------------------------------------------
// Executor

namespace {

constexpr plan::ToolKind kAllKinds[] = {plan::ToolKind::geolocator, plan::ToolKind::forecaster,
                                        plan::ToolKind::simulator, plan::ToolKind::dataset};

// Checked-out slots, released in reverse order on every exit path.
class Leases {
 public:
  ~Leases() {
    for (auto it = held_.rbegin(); it != held_.rend(); ++it) it->first->release(it->second);
  }
  void add(ResourcePool* p, std::size_t slot) { held_.emplace_back(p, slot); }
  std::optional<std::size_t> slot_of(plan::ToolKind k) const {
    for (const auto& [p, s] : held_)
      if (p->kind() == k) return s;
    return std::nullopt;
  }

 private:
  std::vector<std::pair<ResourcePool*, std::size_t>> held_;
};

ExecResult failure(const std::string& id, Status status, std::string code, std::string message, int line = 0,
                   int col = 0) {
  ExecResult r;
  r.request_id = id;
  r.status = status;
  r.error = ErrorInfo{std::move(code), std::move(message), line, col};
  return r;
}

Status status_of(const std::string& plan_code) {
  if (plan_code == "timeout") return Status::timeout;
  if (plan_code == "tool_error") return Status::tool_error;
  return Status::program_error;
}

std::string literal(const json& v) {
  if (v.is_string()) {
    std::string s = "\"";
    for (char c : v.get<std::string>()) {
      if (c == '"' || c == '\\') s += '\\';
      if (c == '\n') {
        s += "\\n";
        continue;
      }
      s += c;
    }
    return s + "\"";
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number_float()) {
    std::string s = v.dump();
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
  }
  if (v.is_array()) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + literal(v[i]);
    return s + "]";
  }
  throw Error("bad_request", "tool arguments must be strings, numbers, booleans or lists");
}

}  // namespace

Executor::Executor(ServerConfig cfg, std::shared_ptr<const catalog::Catalog> cat)
    : cfg_(std::move(cfg)), cat_(std::move(cat)) {
  if (!cat_) throw Error("bad_config", "executor needs a catalog");
  for (auto k : kAllKinds) {
    auto it = cfg_.pools.find(k);
    pools_[k] = std::make_unique<ResourcePool>(k, it == cfg_.pools.end() ? 1 : it->second);
  }
  for (std::size_t i = 0; i < pools_[plan::ToolKind::forecaster]->capacity(); ++i)
    forecasters_.push_back(models::make_forecaster("persistence"));
  for (std::size_t i = 0; i < pools_[plan::ToolKind::simulator]->capacity(); ++i)
    simulators_.push_back(models::make_simulator("advdiff"));
}

Executor::~Executor() = default;

const ResourcePool& Executor::pool(plan::ToolKind kind) const { return *pools_.at(kind); }
ResourcePool& Executor::pool(plan::ToolKind kind) { return *pools_.at(kind); }

ExecResult Executor::execute(const ExecRequest& req) {
  const auto start = Clock::now();
  ExecResult r;
  try {
    r = req.language == "external" ? forward_external(req) : run_toolplan(req);
  } catch (const std::exception& e) {
    spdlog::error("request {} crashed: {}", req.request_id, e.what());
    r = failure(req.request_id, Status::server_error, "internal", e.what());
  } catch (...) {
    spdlog::error("request {} crashed", req.request_id);
    r = failure(req.request_id, Status::server_error, "internal", "evaluation crashed");
  }
  r.request_id = req.request_id;
  r.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
  return r;
}

ExecResult Executor::run_toolplan(const ExecRequest& req) {
  const std::int64_t timeout_ms = req.timeout_ms.value_or(cfg_.default_timeout_ms);
  const auto started = Clock::now();

  plan::ToolProgram program;
  try {
    program = plan::parse(req.program_source);
  } catch (const plan::PlanError& e) {
    const auto& d = e.diagnostic();
    return failure(req.request_id, Status::program_error, d.code, d.message, d.line, d.col);
  }

  Leases leases;
  const auto deadline = Clock::now() + std::chrono::milliseconds(cfg_.pool_wait_ms);
  for (plan::ToolKind k : plan::required_tools(program)) {
    auto slot = pools_[k]->acquire(deadline);
    if (!slot)
      return failure(req.request_id, Status::server_error, "pool_starvation",
                     std::string("pool starvation: no ") + plan::to_string(k) + " freed up within " +
                         std::to_string(cfg_.pool_wait_ms) + " ms");
    leases.add(pools_[k].get(), *slot);
  }

  plan::Environment env;
  try {
    for (const auto& ref : req.dataset_refs) env.datasets.push_back(cat_->resolve(ref));
  } catch (const Error& e) {
    return failure(req.request_id, Status::program_error, e.code(), e.what());
  }
  if (leases.slot_of(plan::ToolKind::geolocator)) env.geolocator = cat_->geo.get();
  if (auto s = leases.slot_of(plan::ToolKind::forecaster)) env.forecaster = forecasters_[*s].get();
  if (auto s = leases.slot_of(plan::ToolKind::simulator)) env.simulator = simulators_[*s].get();

  if (fault_hook_) fault_hook_(req);

  plan::Budget budget;
  budget.max_steps = req.max_steps.value_or(cfg_.max_steps);
  const auto waited = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started).count();
  budget.max_wall_ms = std::max<std::int64_t>(1, timeout_ms - waited);
  try {
    plan::EvalResult out = plan::evaluate(program, env, budget);
    ExecResult r;
    r.request_id = req.request_id;
    r.status = Status::ok;
    r.value_text = plan::format_value(out.value);
    r.stdout_capture = std::move(out.stdout_text);
    return r;
  } catch (const plan::PlanError& e) {
    const auto& d = e.diagnostic();
    return failure(req.request_id, status_of(d.code), d.code, d.message, d.line, d.col);
  }
}

ExecResult Executor::tool_call(const json& call) {
  std::string id = "tool-call";
  try {
    id = call.value("request_id", id);
    const std::string tool = call.at("tool").get<std::string>();
    const std::string method = call.at("method").get<std::string>();
    const auto* info = plan::find_builtin(method);
    if (!info) return failure(id, Status::program_error, "unknown_method", "no builtin named '" + method + "'");
    const bool uses = std::any_of(info->tools.begin(), info->tools.end(),
                                  [&](plan::ToolKind k) { return tool == plan::to_string(k); });
    if (!uses)
      return failure(id, Status::program_error, "wrong_tool",
                     "'" + method + "' is not a method of the " + tool + " tool");
    std::string source = method + "(";
    const json args = call.value("args", json::array());
    if (!args.is_array()) return failure(id, Status::program_error, "bad_request", "args must be a list");
    for (std::size_t i = 0; i < args.size(); ++i) source += (i ? ", " : "") + literal(args[i]);
    source += ")";
    ExecRequest req;
    req.request_id = id;
    req.program_source = source;
    req.dataset_refs = call.value("dataset_refs", std::vector<std::string>{});
    if (call.contains("timeout_ms")) req.timeout_ms = call["timeout_ms"].get<std::int64_t>();
    return execute(req);
  } catch (const json::exception& e) {
    return failure(id, Status::program_error, "bad_request", std::string("malformed tool call: ") + e.what());
  } catch (const Error& e) {
    return failure(id, Status::program_error, e.code(), e.what());
  }
}

void Executor::register_worker(const WorkerRegistration& w) {
  std::lock_guard lock(workers_mu_);
  spdlog::info("worker {} registered for '{}' at {}", w.worker_id, w.language, w.callback);
  workers_[w.language] = w;
  worker_slots_[w.language] = std::make_shared<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(w.max_jobs));
}

std::optional<WorkerRegistration> Executor::worker(const std::string& language) const {
  std::lock_guard lock(workers_mu_);
  auto it = workers_.find(language);
  if (it == workers_.end()) return std::nullopt;
  return it->second;
}

ExecResult Executor::forward_external(const ExecRequest& req) {
  WorkerRegistration w;
  std::shared_ptr<std::counting_semaphore<>> slots;
  {
    std::lock_guard lock(workers_mu_);
    auto it = workers_.find(req.language);
    if (it == workers_.end())
      return failure(req.request_id, Status::server_error, "no_external_executor", "no external executor");
    w = it->second;
    slots = worker_slots_.at(req.language);
  }
  if (!slots->try_acquire_for(std::chrono::milliseconds(cfg_.pool_wait_ms)))
    return failure(req.request_id, Status::server_error, "pool_starvation",
                   "pool starvation: worker " + w.worker_id + " stayed busy");
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{*slots};

  const std::int64_t timeout_ms = req.timeout_ms.value_or(cfg_.default_timeout_ms);
  ExecRequest fwd = req;
  fwd.timeout_ms = timeout_ms;
  httplib::Client cli(w.callback);
  const auto secs = static_cast<time_t>(timeout_ms / 1000 + 10);
  cli.set_read_timeout(secs, 0);
  cli.set_write_timeout(secs, 0);
  auto res = cli.Post("/run", fwd.to_json().dump(), "application/json");
  if (!res)
    return failure(req.request_id, Status::server_error, "external_unreachable",
                   "external executor " + w.worker_id + " unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    return failure(req.request_id, Status::server_error, "external_failed",
                   "external executor answered HTTP " + std::to_string(res->status));
  try {
    return ExecResult::from_json(json::parse(res->body));
  } catch (const std::exception& e) {
    return failure(req.request_id, Status::server_error, "external_failed",
                   std::string("bad reply from external executor: ") + e.what());
  }
}

json Executor::catalog_json() const {
  json sets = json::array();
  for (const auto& [id, ds] : cat_->datasets) {
    json vars = json::array();
    for (const auto& v : ds->variable_names()) vars.push_back({{"name", v}, {"units", ds->units(v)}});
    sets.push_back({{"id", id},
                    {"start", ds->start_time()},
                    {"step_hours", ds->spec().step_hours},
                    {"n_times", ds->n_times()},
                    {"n_lat", ds->spec().n_lat()},
                    {"n_lon", ds->spec().n_lon()},
                    {"variables", vars}});
  }
  return {{"protocol", kProtocol}, {"version", cat_->version}, {"primary", cat_->primary}, {"datasets", sets}};
}

}  // namespace stratus::exec
