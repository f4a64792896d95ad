#include "stratus/scoring.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace stratus::scoring {

using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double rate(std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void metric_of(Row& r, const bench::TaskInstance& inst, const eval::ExtractedAnswer& x, const Context& ctx) {
  const auto& truth = inst.truth;
  switch (inst.rule) {
    case eval::Rule::sae: r.metric = eval::sae(x.number, truth.value, truth.sigma); break;
    case eval::Rule::relative: r.metric = eval::relative_error(x.number, truth.value); break;
    case eval::Rule::hours: r.metric = eval::hours_abs_error(x.number, truth.value); break;
    case eval::Rule::boolean: r.metric = x.boolean == truth.boolean ? 1.0 : 0.0; break;
    case eval::Rule::location: {
      if (!ctx.geo) throw Error("bad_config", "location scoring needs a geolocator");
      const auto m = eval::match_location(x.text, *ctx.geo, ctx.aliases);
      r.metric = m && *m == truth.name ? 1.0 : 0.0;
      break;
    }
    case eval::Rule::emd: {
      if (!ctx.geo) throw Error("bad_config", "location-list scoring needs a geolocator");
      const auto s = eval::extreme_scores(x.items, truth.names, *ctx.geo, ctx.aliases);
      r.metric = s.emd_km;
      r.predicted = s.predicted;
      r.occurred = s.occurred;
      break;
    }
    case eval::Rule::discussion: {
      eval::OverlapJudge fallback;
      const eval::ClaimJudge& judge = ctx.claim_judge ? *ctx.claim_judge : fallback;
      r.metric = eval::score_description(x.text, truth.reference_text, judge).f1;
      break;
    }
  }
}

}  // namespace

Row score(const bench::TaskInstance& inst, const std::optional<Answer>& answer, const Context& ctx) {
  Row r;
  r.instance_id = inst.instance_id;
  r.template_id = inst.template_id;
  r.difficulty = inst.difficulty;
  r.rule = inst.rule;
  r.kind = inst.truth.kind;
  r.outcome = answer ? answer->outcome : "missing";
  if (!answer || answer->text.find_first_not_of(" \t\r\n") == std::string::npos) {
    r.reason = answer ? "empty_answer" : "missing";
    return r;
  }
  const auto x = eval::verify_extract(inst.question, answer->text, inst.truth.kind, ctx.judge);
  if (!x.valid) {
    r.reason = x.reason;
    return r;
  }
  r.valid = true;
  metric_of(r, inst, x, ctx);
  r.correct = eval::correctness(inst.rule, *r.metric);
  return r;
}

std::vector<Row> score_all(const std::vector<bench::TaskInstance>& bench, const std::map<std::string, Answer>& answers,
                           const Context& ctx) {
  std::vector<Row> rows;
  rows.reserve(bench.size());
  for (const auto& inst : bench) {
    auto it = answers.find(inst.instance_id);
    if (it == answers.end()) spdlog::warn("no transcript for {}", inst.instance_id);
    rows.push_back(score(inst, it == answers.end() ? std::nullopt : std::optional<Answer>(it->second), ctx));
  }
  return rows;
}

std::string to_csv(const std::vector<Row>& rows) {
  std::string out = "instance_id,template_id,difficulty,rule,answer_kind,outcome,valid,reason,metric,correct\n";
  for (const auto& r : rows) {
    out += csv_field(r.instance_id) + "," + std::to_string(r.template_id) + "," + bench::to_string(r.difficulty) +
           "," + eval::to_string(r.rule) + "," + eval::to_string(r.kind) + "," + r.outcome + "," +
           (r.valid ? "1" : "0") + "," + r.reason + "," + (r.metric ? num(*r.metric) : "") + "," +
           (r.correct ? "1" : "0") + "\n";
  }
  return out;
}

json summary(const std::vector<Row>& rows, const json& manifest) {
  struct Tally {
    std::size_t n = 0, correct = 0, valid = 0;
    std::vector<double> metrics;
    std::size_t non_finite = 0;
    std::string difficulty, rule;
  };
  Tally all;
  std::map<std::string, Tally> by_diff;
  std::map<int, Tally> by_tmpl;
  std::map<std::string, std::size_t> outcomes;
  std::vector<eval::ExtremeScore> extremes;
  for (const auto& r : rows) {
    for (Tally* t : {&all, &by_diff[bench::to_string(r.difficulty)], &by_tmpl[r.template_id]}) {
      ++t->n;
      t->correct += r.correct;
      t->valid += r.valid;
    }
    Tally& t = by_tmpl[r.template_id];
    t.difficulty = bench::to_string(r.difficulty);
    t.rule = eval::to_string(r.rule);
    if (r.metric) {
      if (std::isfinite(*r.metric)) t.metrics.push_back(*r.metric);
      else ++t.non_finite;
    }
    ++outcomes[r.outcome];
    if (r.rule == eval::Rule::emd && r.valid) {
      eval::ExtremeScore e;
      e.predicted = r.predicted;
      e.occurred = r.occurred;
      extremes.push_back(e);
    }
  }
  auto block = [](const Tally& t) {
    return json{{"n", t.n}, {"correct", t.correct}, {"valid", t.valid}, {"rate", rate(t.correct, t.n)}};
  };
  json diff = json::object();
  for (const char* d : {"easy", "medium", "hard"}) diff[d] = block(by_diff[d]);
  json tmpl = json::object();
  for (const auto& [id, t] : by_tmpl) {
    json b = block(t);
    b["difficulty"] = t.difficulty;
    b["rule"] = t.rule;
    b["non_finite_metrics"] = t.non_finite;
    if (t.metrics.empty()) {
      b["metric_quantiles"] = nullptr;
    } else {
      const auto q = eval::quantiles(t.metrics, {0.05, 0.25, 0.5, 0.75, 0.95});
      b["metric_quantiles"] = {{"q05", q[0]}, {"q25", q[1]}, {"q50", q[2]}, {"q75", q[3]}, {"q95", q[4]}};
    }
    tmpl[std::to_string(id)] = b;
  }
  json out = {{"schema", "stratus-eval/1"},
              {"n", all.n},
              {"correct", all.correct},
              {"valid", all.valid},
              {"rate", rate(all.correct, all.n)},
              {"by_difficulty", diff},
              {"by_template", tmpl},
              {"outcomes", outcomes},
              {"extreme_occurrence_f1", extremes.empty() ? json(nullptr) : json(eval::occurrence_f1(extremes))}};
  if (!manifest.is_null()) out["manifest"] = manifest;
  return out;
}

std::string difficulty_table(const json& s) {
  std::string out = "difficulty,n,correct,rate\n";
  for (const char* d : {"easy", "medium", "hard"}) {
    const auto& b = s.at("by_difficulty").at(d);
    out += std::string(d) + "," + std::to_string(b.at("n").get<std::size_t>()) + "," +
           std::to_string(b.at("correct").get<std::size_t>()) + "," + num(b.at("rate").get<double>()) + "\n";
  }
  out += "all," + std::to_string(s.at("n").get<std::size_t>()) + "," + std::to_string(s.at("correct").get<std::size_t>()) +
         "," + num(s.at("rate").get<double>()) + "\n";
  return out;
}

std::string template_table(const json& s) {
  std::vector<std::pair<int, const json*>> items;
  for (const auto& [id, b] : s.at("by_template").items()) items.emplace_back(std::stoi(id), &b);
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out = "template_id,difficulty,rule,n,correct,rate,metric_q50\n";
  for (const auto& [id, b] : items) {
    const json& q = b->at("metric_quantiles");
    out += std::to_string(id) + "," + b->at("difficulty").get<std::string>() + "," + b->at("rule").get<std::string>() +
           "," + std::to_string(b->at("n").get<std::size_t>()) + "," + std::to_string(b->at("correct").get<std::size_t>()) +
           "," + num(b->at("rate").get<double>()) + "," + (q.is_null() ? "" : num(q.at("q50").get<double>())) + "\n";
  }
  return out;
}

}  // namespace stratus::scoring
