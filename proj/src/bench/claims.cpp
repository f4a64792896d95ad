#include <algorithm>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "internal.hpp"

namespace stratus::bench {

using namespace detail;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

const char* kExtractPrompt =
    "You extract observational weather claims from a report. Return a JSON list; each item has "
    "\"claim\" (one sentence), optional \"timestamp\" (ISO-8601, defaults to the report date), \"variable\", "
    "\"region\", \"stat\" (mean, max or min), \"comparison\" (above or below) and \"threshold\" (a number in the "
    "variable's units). Only include claims that can be checked against gridded data.";

const char* kNegatePrompt =
    "Rewrite the claim so that it states the opposite. Keep every number, place and date. Reply with the "
    "rewritten sentence only.";

}  // namespace

std::vector<Report> load_reports(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Report> out;
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    out.push_back({p.stem().string(), buf.str()});
  }
  return out;
}

ClaimTasks build_claim_tasks(const std::vector<Report>& reports, chat::ChatClient& judge,
                             const catalog::Catalog& cat) {
  ClaimTasks result;
  const auto& ds = cat.primary_dataset();
  const std::size_t steps = steps_of(24, ds.spec());
  const TaskTemplate& tmpl = find_template(46);
  auto skip = [&](const std::string& why) {
    spdlog::warn("claim skipped: {}", why);
    result.skipped.push_back(why);
  };

  for (const auto& report : reports) {
    const std::string first_line = trim(report.text.substr(0, report.text.find('\n')));
    std::int64_t report_time = 0;
    try {
      report_time = grid::parse_iso8601(first_line);
    } catch (const Error&) {
      skip(report.source + ": first line is not an ISO-8601 timestamp");
      continue;
    }
    json claims;
    try {
      claims = json::parse(judge.send({{"system", kExtractPrompt}, {"user", report.text}}));
    } catch (const json::exception&) {
      skip(report.source + ": claim extractor reply is not JSON");
      continue;
    }
    if (!claims.is_array()) {
      skip(report.source + ": claim extractor reply is not a list");
      continue;
    }
    int index = 0;
    for (const auto& item : claims) {
      const std::string label = report.source + " claim " + std::to_string(++index);
      Claim c;
      c.source = report.source;
      std::int64_t when = report_time;
      try {
        c.text = item.at("claim").get<std::string>();
        if (item.contains("timestamp")) when = grid::parse_iso8601(item["timestamp"].get<std::string>());
        c.check = {grid::lookup_variable(item.at("variable").get<std::string>()).name,
                   item.at("region").get<std::string>(), item.value("stat", std::string("mean")),
                   item.value("comparison", std::string("above")), item.at("threshold").get<double>()};
        c.check.region = geo::geocode(*cat.geo, c.check.region).name;
      } catch (const Error& e) {
        skip(label + ": " + e.what());
        continue;
      } catch (const json::exception& e) {
        skip(label + ": malformed claim (" + std::string(e.what()) + ")");
        continue;
      }
      const std::int64_t step_s = static_cast<std::int64_t>(ds.spec().step_hours) * 3600;
      const std::int64_t offset = when - ds.start_epoch_s();
      if (offset < 0 || offset % step_s != 0 ||
          static_cast<std::size_t>(offset / step_s) + steps > ds.n_times()) {
        skip(label + ": dated outside dataset coverage");
        continue;
      }
      const auto t0 = static_cast<std::size_t>(offset / step_s);
      c.timestamp = grid::format_iso8601(when);
      bool holds = false;
      try {
        holds = evaluate_check(c.check, ds.slice_time(t0, t0 + steps), *cat.geo);
      } catch (const Error& e) {
        skip(label + ": " + e.what());
        continue;
      }
      Claim neg = c;
      neg.negated = true;
      neg.original = c.text;
      neg.text = trim(judge.send({{"system", kNegatePrompt}, {"user", c.text}}));
      if (neg.text.empty()) {
        skip(label + ": empty negation");
        continue;
      }
      for (const Claim* claim : {&c, &neg}) {
        TaskInstance t;
        t.instance_id = "t46-" + report.source + "-" + std::to_string(index) + (claim->negated ? "-neg" : "-pos");
        t.template_id = 46;
        t.bindings = {{"t0", t0},
                      {"t1", t0 + steps},
                      {"start", c.timestamp},
                      {"variable", c.check.variable},
                      {"region", c.check.region},
                      {"stat", c.check.stat},
                      {"comparison", c.check.comparison},
                      {"threshold", c.check.threshold},
                      {"negated", claim->negated},
                      {"claim", claim->text}};
        t.question = "Is the following claim supported by the data for the 24 hours starting " + c.timestamp +
                     "? Claim: " + claim->text + " Answer yes or no.";
        t.dataset_refs = {catalog::slice_ref(cat.primary, t0, t0 + steps)};
        t.truth = boolean(claim->negated ? !holds : holds);
        t.metric = tmpl.metric;
        t.rule = tmpl.rule;
        t.difficulty = tmpl.difficulty;
        t.claim = *claim;
        result.instances.push_back(std::move(t));
      }
    }
  }
  return result;
}

}  // namespace stratus::bench
