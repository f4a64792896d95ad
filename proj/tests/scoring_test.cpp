#include <cmath>

#include "doctest.h"
#include "stratus/scoring.hpp"

using namespace stratus;
using namespace stratus::scoring;
using bench::AnswerSpec;
using bench::TaskInstance;

namespace {

const geo::GeoIndex& world() {
  static const geo::GeoIndex g = geo::GeoIndex::load("data/world.geojson");
  return g;
}

Context context() {
  Context c;
  c.geo = &world();
  c.aliases = eval::AliasTable::load("data/aliases.txt");
  return c;
}

TaskInstance inst(std::string id, int tmpl, eval::Rule rule, AnswerSpec truth,
                  bench::Difficulty d = bench::Difficulty::easy) {
  TaskInstance t;
  t.instance_id = std::move(id);
  t.template_id = tmpl;
  t.question = "q";
  t.rule = rule;
  t.truth = std::move(truth);
  t.difficulty = d;
  return t;
}

AnswerSpec numeric(double v, double sigma) {
  AnswerSpec a;
  a.kind = eval::AnswerKind::numeric;
  a.value = v;
  a.units = "K";
  a.sigma = sigma;
  return a;
}

AnswerSpec kind_only(eval::AnswerKind k) {
  AnswerSpec a;
  a.kind = k;
  return a;
}

std::optional<Answer> said(std::string text) { return Answer{std::move(text), "solved"}; }

}  // namespace

TEST_CASE("numeric and hours answers against strict thresholds") {
  const auto ctx = context();
  const auto t = inst("n", 2, eval::Rule::sae, numeric(280.0, 10.0));
  auto r = score(t, said("<solution>280.4 K</solution>"), ctx);
  CHECK(r.valid);
  CHECK(*r.metric == doctest::Approx(0.04));
  CHECK(r.correct);
  r = score(t, said("280.5 K"), ctx);
  CHECK(*r.metric == 0.05);
  CHECK_FALSE(r.correct);

  auto h = kind_only(eval::AnswerKind::hours);
  h.value = 30;
  const auto th = inst("h", 4, eval::Rule::hours, h);
  CHECK(score(th, said("30 h"), ctx).correct);
  r = score(th, said("24 hours"), ctx);
  CHECK(*r.metric == 6.0);
  CHECK_FALSE(r.correct);

  auto rel = numeric(1000.0, 1.0);
  rel.units = "km";
  const auto tr = inst("r", 30, eval::Rule::relative, rel, bench::Difficulty::medium);
  CHECK(score(tr, said("1049 km"), ctx).correct);
  CHECK_FALSE(score(tr, said("1050 km"), ctx).correct);
}

TEST_CASE("locations, location lists and booleans") {
  const auto ctx = context();
  auto loc = kind_only(eval::AnswerKind::location);
  loc.name = "United States of America";
  const auto tl = inst("l", 1, eval::Rule::location, loc);
  CHECK(score(tl, said("<solution>USA</solution>"), ctx).correct);
  CHECK(score(tl, said("\"United States of America\""), ctx).correct);
  CHECK_FALSE(score(tl, said("Canada"), ctx).correct);
  CHECK_FALSE(score(tl, said("Mordor"), ctx).correct);

  auto list = kind_only(eval::AnswerKind::location_list);
  const auto empty_truth = inst("e", 10, eval::Rule::emd, list, bench::Difficulty::medium);
  auto r = score(empty_truth, said("[]"), ctx);
  CHECK(r.correct);
  CHECK(*r.metric == 0.0);
  r = score(empty_truth, said("[\"Northland\"]"), ctx);
  CHECK_FALSE(r.correct);
  CHECK(std::isinf(*r.metric));
  list.names = {"Eastmark", "Northland"};
  const auto two = inst("t", 10, eval::Rule::emd, list, bench::Difficulty::medium);
  CHECK(score(two, said("[\"Northland\", \"Eastmark\"]"), ctx).correct);
  CHECK_FALSE(score(two, said("none"), ctx).correct);
  r = score(two, said("Sunreach"), ctx);
  CHECK(*r.metric > 100.0);
  CHECK_FALSE(r.correct);

  auto b = kind_only(eval::AnswerKind::boolean);
  b.boolean = true;
  const auto tb = inst("b", 12, eval::Rule::boolean, b);
  CHECK(score(tb, said("Yes, it does."), ctx).correct);
  CHECK_FALSE(score(tb, said("false"), ctx).correct);
  r = score(tb, said("maybe"), ctx);
  CHECK_FALSE(r.valid);
  CHECK(r.reason == "no_boolean");
}

TEST_CASE("missing and empty answers are invalid") {
  const auto ctx = context();
  auto list = kind_only(eval::AnswerKind::location_list);
  const auto t = inst("e", 10, eval::Rule::emd, list);
  auto r = score(t, std::nullopt, ctx);
  CHECK_FALSE(r.valid);
  CHECK_FALSE(r.correct);
  CHECK(r.outcome == "missing");
  r = score(t, Answer{"", "budget_exhausted"}, ctx);
  CHECK_FALSE(r.correct);
  CHECK(r.reason == "empty_answer");
}

TEST_CASE("csv rows and summary") {
  const auto ctx = context();
  std::vector<TaskInstance> bench = {inst("a", 2, eval::Rule::sae, numeric(280, 10)),
                                     inst("b", 2, eval::Rule::sae, numeric(280, 10)),
                                     inst("c", 2, eval::Rule::sae, numeric(280, 10)),
                                     inst("d", 33, eval::Rule::sae, numeric(5, 1), bench::Difficulty::medium)};
  const std::map<std::string, Answer> answers = {
      {"a", {"280 K", "solved"}}, {"b", {"290 K", "solved"}}, {"d", {"5.03125", "solved"}}};
  const auto rows = score_all(bench, answers, ctx);
  REQUIRE(rows.size() == 4);
  const std::string csv = to_csv(rows);
  CHECK(csv.rfind("instance_id,template_id,difficulty,rule,answer_kind,outcome,valid,reason,metric,correct\n", 0) == 0);
  CHECK(csv.find("a,2,easy,sae,numeric,solved,1,,0,1\n") != std::string::npos);
  CHECK(csv.find("b,2,easy,sae,numeric,solved,1,,1,0\n") != std::string::npos);
  CHECK(csv.find("c,2,easy,sae,numeric,missing,0,missing,,0\n") != std::string::npos);

  const auto s = summary(rows, {{"seed", 1}});
  CHECK(s["n"] == 4);
  CHECK(s["correct"] == 2);
  CHECK(s["rate"] == 0.5);
  CHECK(s["by_difficulty"]["easy"]["rate"].get<double>() == doctest::Approx(1.0 / 3.0));
  CHECK(s["by_difficulty"]["medium"]["correct"] == 1);
  CHECK(s["by_difficulty"]["hard"]["n"] == 0);
  CHECK(s["by_template"]["2"]["metric_quantiles"]["q50"] == 0.5);
  CHECK(s["by_template"]["2"]["metric_quantiles"]["q05"].get<double>() == doctest::Approx(0.05));
  CHECK(s["outcomes"]["missing"] == 1);
  CHECK(s["manifest"]["seed"] == 1);
  CHECK(s.dump().find("wall") == std::string::npos);
  CHECK(summary(rows, {{"seed", 1}}).dump() == s.dump());

  const std::string table = difficulty_table(s);
  CHECK(table == "difficulty,n,correct,rate\neasy,3,1,0.3333333333333333\nmedium,1,1,1\nhard,0,0,0\nall,4,2,0.5\n");
  CHECK(template_table(s) == "template_id,difficulty,rule,n,correct,rate,metric_q50\n2,easy,sae,3,1,0.3333333333333333,0.5\n"
                             "33,medium,sae,1,1,1,0.03125\n");

  const auto none = summary({});
  CHECK(none["n"] == 0);
  CHECK(none["rate"] == 0.0);
  CHECK(none["by_template"].empty());
}
