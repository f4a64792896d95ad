#include "cli.hpp"

#include <signal.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "stratus/agent.hpp"
#include "stratus/bench.hpp"
#include "stratus/scoring.hpp"

namespace stratus::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::int64_t kStartEpoch = 1577836800;  // 2020-01-01T00:00:00Z

// Raised for anything wrong with the command's inputs (exit 3).
class InputError : public Error {
 public:
  using Error::Error;
};

template <class F>
auto input(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(e.code(), e.what());
  } catch (const json::exception& e) {
    throw InputError("schema_error", e.what());
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("io_error", "cannot open '" + p.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error("io_error", "cannot write '" + p.string() + "'");
}

json load_json(const fs::path& p) {
  const std::string text = read_file(p);
  return input([&] { return json::parse(text); });
}

std::vector<std::string> dataset_ids(const catalog::Catalog& cat) {
  std::vector<std::string> ids;
  for (const auto& [id, _] : cat.datasets) ids.push_back(id);
  return ids;
}

// First manifest line of a JSON-lines file, or null.
json manifest_of(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.value("type", "") == "manifest") {
      json m = j;
      m.erase("type");
      return m;
    }
  }
  return nullptr;
}

std::unique_ptr<chat::ChatClient> make_judge(const std::string& kind, const std::string& script) {
  if (kind == "none") return nullptr;
  if (kind == "provider") return chat::HttpClient::from_env();
  if (script.empty()) throw InputError("bad_judge", "--judge mock needs --judge-script");
  const auto s = input([&] { return chat::MockScript::load(script); });
  return s.client_for("");
}

// ---------------------------------------------------------------------------

struct GenData {
  std::uint64_t seed = 1;
  std::string out;
  std::size_t steps = 20;
  std::size_t baseline_steps = 16;
  std::string geojson = "data/world.geojson";
};

int gen_data(const GenData& o, std::ostream& os) {
  const fs::path dir = o.out;
  const std::string shapes = read_file(o.geojson);
  fs::create_directories(dir);
  std::vector<std::string> vars;
  for (const auto& v : grid::variable_registry()) vars.push_back(v.name);
  const auto obs = grid::synth_dataset(o.seed, vars, o.steps, grid::make_grid(), kStartEpoch);
  grid::save_dataset(obs, dir / "obs.zgrid");
  const auto base = grid::synth_dataset(o.seed, {"temperature_2m", "mean_sea_level_pressure"}, o.baseline_steps,
                                        grid::make_grid(), kStartEpoch - 30 * 86400);
  grid::save_dataset(base, dir / "baseline.zgrid");
  write_file(dir / "world.geojson", shapes);
  const json manifest = {{"version", "seed-" + std::to_string(o.seed)},
                         {"seed", o.seed},
                         {"primary", "obs"},
                         {"geojson", "world.geojson"},
                         {"datasets", {{{"id", "obs"}, {"path", "obs.zgrid"}}, {{"id", "baseline"}, {"path", "baseline.zgrid"}}}}};
  write_file(dir / "catalog.json", manifest.dump(2) + "\n");
  os << (dir / "catalog.json").string() << "\n";
  return kOk;
}

struct GenBench {
  std::uint64_t seed = 1;
  std::string data;
  std::string out;
  int per_template = 12;
  std::string reports;
  std::string judge = "none";
  std::string judge_script;
};

int gen_bench(const GenBench& o, std::ostream& os) {
  if (!o.reports.empty() && o.judge == "none") throw InputError("bad_judge", "--reports needs a judge other than none");
  const auto cat = input([&] { return catalog::load_catalog(o.data); });
  std::unique_ptr<chat::ChatClient> judge = make_judge(o.judge, o.judge_script);
  auto instances = bench::generate_bench(o.seed, cat, o.per_template);
  if (!o.reports.empty()) {
    const auto reports = input([&] { return bench::load_reports(o.reports); });
    auto claims = bench::build_claim_tasks(reports, *judge, cat);
    for (const auto& s : claims.skipped) spdlog::warn("skipped claim: {}", s);
    for (auto& t : claims.instances) instances.push_back(std::move(t));
  }
  const json manifest = {{"seed", o.seed}, {"datasets", dataset_ids(cat)}, {"data", o.data}, {"out", o.out}};
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  bench::export_bench(instances, o.out, manifest);
  os << instances.size() << " instances\n";
  return kOk;
}

int serve(const std::string& config, std::ostream& os) {
  auto loaded = input([&] { return exec::load_server_config(config); });
  // Block the stop signals before any server thread exists so only sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  exec::Server server(loaded.server, loaded.catalog);
  server.start();
  os << "listening " << server.endpoint() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}, draining", sig);
  server.shutdown();
  return kOk;
}

struct RunAgent {
  std::string bench;
  std::string mode = "direct";
  std::string endpoint;
  std::string config;
  std::string data;
  std::string mock;
  int jobs = 1;
  std::string out;
  std::uint64_t seed = 1;
  std::string difficulty;
};

int run_agent(const RunAgent& o, std::ostream& os) {
  const auto mode = input([&] { return agent::parse_mode(o.mode); });
  const int sources = !o.endpoint.empty() + !o.config.empty() + !o.data.empty();
  if (mode != agent::Mode::text_only && sources != 1)
    throw InputError("bad_backend", "give exactly one of --endpoint, --config or --data");
  auto instances = input([&] { return bench::import_bench(o.bench); });
  if (!o.difficulty.empty()) {
    const auto d = input([&] { return bench::parse_difficulty(o.difficulty); });
    std::erase_if(instances, [&](const bench::TaskInstance& t) { return t.difficulty != d; });
  }
  std::optional<chat::MockScript> script;
  if (!o.mock.empty()) script = input([&] { return chat::MockScript::load(o.mock); });
  else chat::HttpClient::from_env();  // fail early when the provider is not configured

  std::unique_ptr<exec::Executor> local;
  json listing;
  std::string endpoint = "none";
  if (!o.endpoint.empty()) {
    endpoint = o.endpoint;
    exec::Client probe(o.endpoint);
    listing = probe.catalog();
  } else if (!o.config.empty()) {
    auto loaded = input([&] { return exec::load_server_config(o.config); });
    local = std::make_unique<exec::Executor>(loaded.server, loaded.catalog);
    endpoint = "in-process";
  } else if (!o.data.empty()) {
    auto cat = input([&] { return catalog::load_catalog(o.data); });
    local = std::make_unique<exec::Executor>(exec::ServerConfig{}, std::make_shared<const catalog::Catalog>(cat));
    endpoint = "in-process";
  }
  if (local) listing = local->catalog_json();

  std::vector<std::string> ids;
  if (listing.is_object())
    for (const auto& d : listing.at("datasets")) ids.push_back(d.at("id"));
  const json manifest = {{"type", "manifest"}, {"seed", o.seed},     {"datasets", ids},
                         {"bench", o.bench},   {"mode", o.mode},     {"endpoint", endpoint},
                         {"out", o.out},       {"difficulty", o.difficulty}};

  std::vector<std::string> lines(instances.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    std::unique_ptr<exec::Client> remote;
    if (!o.endpoint.empty()) remote = std::make_unique<exec::Client>(o.endpoint);
    for (std::size_t i; (i = next++) < instances.size();) {
      try {
        const auto& inst = instances[i];
        auto client = script ? script->client_for(inst.instance_id) : chat::HttpClient::from_env();
        agent::Question q{inst.instance_id, inst.question, inst.dataset_refs, ""};
        agent::Transcript t;
        if (mode == agent::Mode::text_only) {
          t = agent::run_text_only(q, *client);
        } else {
          q.context = agent::describe_datasets(q.dataset_refs, listing);
          exec::Backend& backend = remote ? static_cast<exec::Backend&>(*remote) : *local;
          t = mode == agent::Mode::direct ? agent::run_direct(q, *client, backend)
                                          : agent::run_reflective(q, *client, backend);
        }
        lines[i] = agent::to_jsonl(t);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!failure) failure = std::current_exception();
        next = instances.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < std::max(1, o.jobs); ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::string text = manifest.dump() + "\n";
  for (const auto& l : lines) text += l;
  write_file(o.out, text);
  os << instances.size() << " transcripts\n";
  return kOk;
}

struct Evaluate {
  std::string bench;
  std::string transcripts;
  std::string out;
  std::string geojson = "data/world.geojson";
  std::string aliases = "data/aliases.txt";
  std::string judge = "none";
  std::string judge_script;
};

int evaluate(const Evaluate& o, std::ostream& os) {
  const auto instances = input([&] { return bench::import_bench(o.bench); });
  const std::string text = read_file(o.transcripts);
  const auto transcripts = input([&] { return agent::parse_transcripts(text); });
  std::map<std::string, scoring::Answer> answers;
  for (const auto& t : transcripts) answers.emplace(t.instance_id, scoring::Answer{t.answer, agent::to_string(t.outcome)});

  const auto geo = input([&] { return geo::GeoIndex::load(o.geojson); });
  scoring::Context ctx;
  ctx.geo = &geo;
  ctx.aliases = input([&] { return eval::AliasTable::load(o.aliases); });
  auto judge = make_judge(o.judge, o.judge_script);
  ctx.judge = judge.get();

  const auto rows = scoring::score_all(instances, answers, ctx);
  json manifest = manifest_of(text);
  if (manifest.is_null()) manifest = {{"bench", o.bench}};
  manifest["transcripts"] = o.transcripts;
  manifest["eval_out"] = o.out;
  manifest["judge"] = o.judge;
  const json s = scoring::summary(rows, manifest);
  const fs::path dir = o.out;
  write_file(dir / "results.csv", scoring::to_csv(rows));
  write_file(dir / "summary.json", s.dump(2) + "\n");
  os << s.at("correct").get<std::size_t>() << "/" << s.at("n").get<std::size_t>() << " correct\n";
  return kOk;
}

int report(const std::string& eval_dir, const std::string& out, std::ostream& os) {
  const json s = load_json(fs::path(eval_dir) / "summary.json");
  const fs::path dir = out;
  const auto by_diff = input([&] { return scoring::difficulty_table(s); });
  const auto by_tmpl = input([&] { return scoring::template_table(s); });
  write_file(dir / "by_difficulty.csv", by_diff);
  write_file(dir / "by_template.csv", by_tmpl);
  os << (dir / "by_difficulty.csv").string() << "\n" << (dir / "by_template.csv").string() << "\n";
  return kOk;
}

struct MockScriptOpts {
  std::string bench;
  std::string mode = "direct";
  std::string out;
  std::string difficulty;
  std::string fallback = "<solution>I cannot determine this.</solution>";
};

// Replies that run each instance's reference program.
int mock_script(const MockScriptOpts& o, std::ostream& os) {
  const auto mode = input([&] { return agent::parse_mode(o.mode); });
  if (mode == agent::Mode::text_only) throw InputError("bad_mode", "mock scripts are for direct or reflective runs");
  const auto instances = input([&] { return bench::import_bench(o.bench); });
  std::optional<bench::Difficulty> only;
  if (!o.difficulty.empty()) only = input([&] { return bench::parse_difficulty(o.difficulty); });
  auto script = chat::MockScript::uniform({o.fallback});
  std::size_t n = 0;
  for (const auto& t : instances) {
    if (t.reference_program.empty() || (only && t.difficulty != *only)) continue;
    std::vector<std::string> replies = {"<execute>\n" + t.reference_program + "\n</execute>"};
    if (mode == agent::Mode::reflective) replies.push_back("<solution>{{last_observation}}</solution>");
    script.set(t.instance_id, std::move(replies));
    ++n;
  }
  write_file(o.out, script.to_json().dump(2) + "\n");
  os << n << " scripted instances\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"stratus: gridded-data question answering benchmark"};
  app.require_subcommand(1);
  const std::vector<std::string> judges = {"none", "mock", "provider"};
  const std::vector<std::string> modes = {"direct", "reflective", "text_only"};

  GenData gd;
  auto* c_gd = app.add_subcommand("gen-data", "Write synthetic .zgrid datasets and a catalog manifest");
  c_gd->add_option("--seed", gd.seed)->required();
  c_gd->add_option("--out", gd.out, "Output directory")->required();
  c_gd->add_option("--steps", gd.steps)->check(CLI::Range(1, 10000));
  c_gd->add_option("--baseline-steps", gd.baseline_steps)->check(CLI::Range(1, 10000));
  c_gd->add_option("--geojson", gd.geojson);

  GenBench gb;
  auto* c_gb = app.add_subcommand("gen-bench", "Generate benchmark instances as zbench JSON lines");
  c_gb->add_option("--seed", gb.seed)->required();
  c_gb->add_option("--data", gb.data, "Catalog manifest")->required();
  c_gb->add_option("--out", gb.out)->required();
  c_gb->add_option("--per-template", gb.per_template)->check(CLI::Range(1, 100000));
  c_gb->add_option("--reports", gb.reports, "Directory of report .txt files for claim tasks");
  c_gb->add_option("--judge", gb.judge)->check(CLI::IsMember(judges));
  c_gb->add_option("--judge-script", gb.judge_script);

  std::string serve_config;
  auto* c_sv = app.add_subcommand("serve", "Run the execution server until SIGINT or SIGTERM");
  c_sv->add_option("--config", serve_config)->required();

  RunAgent ra;
  auto* c_ra = app.add_subcommand("run-agent", "Answer benchmark questions and write transcripts");
  c_ra->add_option("--bench", ra.bench)->required();
  c_ra->add_option("--mode", ra.mode)->check(CLI::IsMember(modes));
  c_ra->add_option("--endpoint", ra.endpoint, "Execution server, e.g. http://127.0.0.1:8080");
  c_ra->add_option("--config", ra.config, "Server config for an in-process executor");
  c_ra->add_option("--data", ra.data, "Catalog manifest for an in-process executor");
  c_ra->add_option("--mock", ra.mock, "Mock reply script; without it the provider client is used");
  c_ra->add_option("--jobs", ra.jobs)->check(CLI::Range(1, 256));
  c_ra->add_option("--out", ra.out)->required();
  c_ra->add_option("--seed", ra.seed);
  c_ra->add_option("--difficulty", ra.difficulty);

  Evaluate ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score transcripts against a benchmark");
  c_ev->add_option("--bench", ev.bench)->required();
  c_ev->add_option("--transcripts", ev.transcripts)->required();
  c_ev->add_option("--out", ev.out, "Output directory")->required();
  c_ev->add_option("--geojson", ev.geojson);
  c_ev->add_option("--aliases", ev.aliases);
  c_ev->add_option("--judge", ev.judge)->check(CLI::IsMember(judges));
  c_ev->add_option("--judge-script", ev.judge_script);

  std::string eval_dir, report_out;
  auto* c_rp = app.add_subcommand("report", "Write correctness tables as CSV");
  c_rp->add_option("--eval", eval_dir, "Directory written by evaluate")->required();
  c_rp->add_option("--out", report_out, "Output directory")->required();

  MockScriptOpts ms;
  auto* c_ms = app.add_subcommand("mock-script", "Build a mock reply script from reference programs");
  c_ms->add_option("--bench", ms.bench)->required();
  c_ms->add_option("--mode", ms.mode)->check(CLI::IsMember(modes));
  c_ms->add_option("--out", ms.out)->required();
  c_ms->add_option("--difficulty", ms.difficulty);
  c_ms->add_option("--fallback", ms.fallback, "Reply for instances without a reference program");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (*c_gd) return gen_data(gd, out);
    if (*c_gb) return gen_bench(gb, out);
    if (*c_sv) return serve(serve_config, out);
    if (*c_ra) return run_agent(ra, out);
    if (*c_ev) return evaluate(ev, out);
    if (*c_rp) return report(eval_dir, report_out, out);
    if (*c_ms) return mock_script(ms, out);
  } catch (const InputError& e) {
    err << json{{"error", e.code()}, {"command", cmd}, {"message", e.what()}, {"exit", kInput}}.dump() << "\n";
    return kInput;
  } catch (const Error& e) {
    err << json{{"error", e.code()}, {"command", cmd}, {"message", e.what()}, {"exit", kRuntime}}.dump() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << json{{"error", "internal"}, {"command", cmd}, {"message", e.what()}, {"exit", kRuntime}}.dump() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace stratus::cli
