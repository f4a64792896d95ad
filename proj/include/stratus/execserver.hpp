#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "stratus/catalog.hpp"
#include "stratus/error.hpp"
#include "stratus/toolplan.hpp"

namespace httplib {
class Server;
}

namespace stratus::exec {

inline constexpr const char* kProtocol = "stratus-exec/1";

// ---------------------------------------------------------------------------
// Wire types

enum class Status { ok, program_error, tool_error, timeout, server_error };

const char* to_string(Status s);
Status parse_status(const std::string& text);

struct ExecRequest {
  std::string request_id;
  std::string program_source;
  std::string language = "toolplan";  // toolplan or external
  std::vector<std::string> dataset_refs;
  std::optional<std::int64_t> timeout_ms;
  std::optional<std::uint64_t> max_steps;

  nlohmann::json to_json() const;
  /// Throws Error{"bad_request"}.
  static ExecRequest from_json(const nlohmann::json& j);
};

struct ErrorInfo {
  std::string code;
  std::string message;
  int line = 0;
  int col = 0;
};

struct ExecResult {
  std::string request_id;
  Status status = Status::ok;
  std::optional<std::string> value_text;
  std::string stdout_capture;
  std::optional<ErrorInfo> error;
  std::int64_t wall_ms = 0;

  nlohmann::json to_json() const;
  /// Throws Error{"protocol_error"}.
  static ExecResult from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Pools

/// Counting pool of tool slots with instrumentation. A slot index identifies
/// the tool instance lent out.
class ResourcePool {
 public:
  ResourcePool(plan::ToolKind kind, std::size_t capacity);

  /// Waits until a slot frees up or the deadline passes.
  std::optional<std::size_t> acquire(std::chrono::steady_clock::time_point deadline);
  void release(std::size_t slot);

  plan::ToolKind kind() const { return kind_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t free_count() const;
  std::size_t in_use() const;
  std::size_t peak() const;
  /// Times a checkout observed more than `capacity` slots out.
  std::size_t violations() const;
  std::size_t waiting() const;
  void reset_peak();

 private:
  plan::ToolKind kind_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::size_t> free_;
  std::size_t out_ = 0, peak_ = 0, violations_ = 0, waiting_ = 0;
};

// ---------------------------------------------------------------------------
// Executor

struct WorkerRegistration {
  std::string worker_id;
  std::string language = "external";
  std::string callback;  // base URL, jobs go to <callback>/run
  std::size_t max_jobs = 1;

  nlohmann::json to_json() const;
  static WorkerRegistration from_json(const nlohmann::json& j);
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::map<plan::ToolKind, std::size_t> pools = {{plan::ToolKind::geolocator, 2},
                                                 {plan::ToolKind::forecaster, 2},
                                                 {plan::ToolKind::simulator, 2},
                                                 {plan::ToolKind::dataset, 4}};
  std::int64_t pool_wait_ms = 60'000;
  std::int64_t default_timeout_ms = 30'000;
  std::uint64_t max_steps = 1'000'000;
  std::size_t http_threads = 64;
};

/// Reads {bind, pools, catalog | datasets + geojson, pool_wait_ms,
/// default_timeout_ms, max_steps}. Relative paths resolve against the
/// config file's directory. Throws Error{"bad_config"}.
struct LoadedConfig {
  ServerConfig server;
  std::shared_ptr<const catalog::Catalog> catalog;
};
LoadedConfig load_server_config(const std::filesystem::path& path);
LoadedConfig parse_server_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Anything that runs ExecRequests: the in-process executor or a remote
/// server.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ExecResult execute(const ExecRequest& req) = 0;
};

class Executor final : public Backend {
 public:
  Executor(ServerConfig cfg, std::shared_ptr<const catalog::Catalog> cat);
  ~Executor() override;

  ExecResult execute(const ExecRequest& req) override;

  /// Single builtin call on behalf of an external worker:
  /// {"tool", "method", "args": [...], "dataset_refs": [...]}. The method
  /// must be a builtin that uses `tool`.
  ExecResult tool_call(const nlohmann::json& call);

  void register_worker(const WorkerRegistration& w);
  std::optional<WorkerRegistration> worker(const std::string& language) const;

  const ResourcePool& pool(plan::ToolKind kind) const;
  ResourcePool& pool(plan::ToolKind kind);
  const catalog::Catalog& catalog() const { return *cat_; }
  const ServerConfig& config() const { return cfg_; }
  nlohmann::json catalog_json() const;

  /// Test hook run after tools are acquired and before evaluation.
  void set_fault_hook(std::function<void(const ExecRequest&)> hook) { fault_hook_ = std::move(hook); }

 private:
  ExecResult run_toolplan(const ExecRequest& req);
  ExecResult forward_external(const ExecRequest& req);

  ServerConfig cfg_;
  std::shared_ptr<const catalog::Catalog> cat_;
  std::map<plan::ToolKind, std::unique_ptr<ResourcePool>> pools_;
  std::vector<std::unique_ptr<models::Forecaster>> forecasters_;
  std::vector<std::unique_ptr<models::Simulator>> simulators_;
  mutable std::mutex workers_mu_;
  std::map<std::string, WorkerRegistration> workers_;
  std::map<std::string, std::shared_ptr<std::counting_semaphore<>>> worker_slots_;
  std::function<void(const ExecRequest&)> fault_hook_;
};

// ---------------------------------------------------------------------------
// HTTP service

class Server {
 public:
  Server(ServerConfig cfg, std::shared_ptr<const catalog::Catalog> cat);
  ~Server();

  /// Binds and starts serving on a background thread. Port 0 picks a free
  /// port. Throws Error{"bind_failed"}.
  void start();
  int port() const { return port_; }
  std::string endpoint() const;

  /// Refuses new executions with 503, waits for in-flight ones, then stops.
  void shutdown();
  bool draining() const { return draining_; }
  std::size_t in_flight() const { return in_flight_; }

  Executor& executor() { return exec_; }

 private:
  Executor exec_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> draining_{false};
  std::atomic<std::size_t> in_flight_{0};
  std::mutex drain_mu_;
  std::condition_variable drain_cv_;
};

/// Blocking client. Each call opens its own connection, so one Client may
/// be shared by many threads.
class Client final : public Backend {
 public:
  explicit Client(std::string endpoint, int timeout_s = 300);

  /// Throws Error{"connection_failed"} or Error{"protocol_error"}.
  ExecResult execute(const ExecRequest& req) override;
  nlohmann::json catalog();
  bool healthy();
  void register_worker(const WorkerRegistration& w);
  ExecResult tool_call(const nlohmann::json& call);

 private:
  nlohmann::json post(const std::string& path, const std::string& body);
  nlohmann::json get(const std::string& path);

  std::string host_;
  int port_ = 80;
  int timeout_s_;
};

}  // namespace stratus::exec
