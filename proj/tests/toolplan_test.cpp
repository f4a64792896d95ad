#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "stratus/toolplan.hpp"

using namespace stratus;
using namespace stratus::plan;

namespace {

// 8x8 block spanning 42..52.5N, 6..16.5E: part Northland, part Southvale.
grid::GridSpec block() { return grid::make_subgrid(88, 4, 8, 8); }

const geo::GeoIndex& block_geo() {
  static const geo::GeoIndex index = geo::GeoIndex::load("data/world.geojson", block());
  return index;
}

std::string error_code(const std::string& src, const Environment& env = {}, Budget budget = {},
                       Diagnostic* diag = nullptr) {
  try {
    evaluate(parse(src), env, budget);
  } catch (const PlanError& e) {
    if (diag) *diag = e.diagnostic();
    return e.code();
  }
  return "none";
}

Value run(const std::string& src, const Environment& env = {}) { return evaluate(parse(src), env).value; }

Environment block_env(std::uint64_t seed) {
  Environment env;
  env.datasets.push_back(std::make_shared<const grid::GridDataset>(
      grid::synth_dataset(seed, {"t2m", "msl", "u10"}, 6, block())));
  env.geolocator = &block_geo();
  return env;
}

int count_calls(const Expr& e, const std::set<std::string>& names) {
  int n = e.kind == Expr::Kind::call && names.count(e.text) ? 1 : 0;
  for (const auto& a : e.args) n += count_calls(*a, names);
  return n;
}

}  // namespace

TEST_CASE("parse: nested tool calls") {
  const ToolProgram p = parse(R"(mean(sel("t2m", mask(geocode("Northland")))))");
  REQUIRE(p.result->kind == Expr::Kind::call);
  CHECK(p.result->text == "mean");
  CHECK(count_calls(*p.result, {"mean", "median", "min", "max", "sum"}) == 1);
  CHECK(count_calls(*p.result, {"sel"}) == 1);
  CHECK(count_calls(*p.result, {"mask", "geocode"}) == 2);
  CHECK(required_tools(p) == std::vector<ToolKind>{ToolKind::geolocator, ToolKind::dataset});
  CHECK(required_tools(parse(R"(mean(sel("t2m", "Northland")))")) ==
        std::vector<ToolKind>{ToolKind::geolocator, ToolKind::dataset});
  CHECK(required_tools(parse(R"(mean(sel("t2m", point(45.0, 50.0))))")) == std::vector<ToolKind>{ToolKind::dataset});
  CHECK(required_tools(parse("2 + 3")).empty());
}

TEST_CASE("parse: diagnostics carry positions") {
  auto diag_of = [](const std::string& src) {
    try {
      parse(src);
    } catch (const PlanError& e) {
      return e.diagnostic();
    }
    return Diagnostic{"none", "", 0, 0};
  };
  Diagnostic d = diag_of(R"(mean(sel("t2m"))");
  CHECK(d.code == "syntax_error");
  CHECK(d.line == 1);
  CHECK(d.col == 16);
  d = diag_of("(1 + 2))");
  CHECK(d.code == "syntax_error");
  CHECK(d.col == 8);
  d = diag_of("frobnicate(1)");
  CHECK(d.code == "unknown_identifier");
  CHECK(d.col == 1);
  d = diag_of("let a = 1;\n  a + b");
  CHECK(d.code == "unknown_identifier");
  CHECK(d.line == 2);
  CHECK(d.col == 7);
  d = diag_of("1 $ 2");
  CHECK(d.code == "lex_error");
  CHECK(d.col == 3);
  CHECK(diag_of("\"open").code == "lex_error");
  CHECK(diag_of("mean()").code == "arity_mismatch");
  CHECK(diag_of("point(1)").code == "arity_mismatch");
  CHECK(diag_of("mean").code == "syntax_error");
  CHECK(diag_of("").code == "syntax_error");
  CHECK(diag_of("let mean = 1; 2").code == "syntax_error");
  CHECK(diag_of(std::string(kMaxSourceBytes + 1, ' ')).code == "too_large");
  CHECK(diag_of("99999999999999999999").code == "lex_error");
  CHECK(diag_of("1 < 2 < 3").code == "syntax_error");
  CHECK(d.to_json()["col"] == 3);
}

TEST_CASE("parse: environment bindings and comments") {
  CHECK_THROWS_AS(parse("x + 1"), PlanError);
  const ToolProgram p = parse("# leading comment\nx + 1  # trailing", {"x"});
  Environment env;
  env.bindings["x"] = std::int64_t{41};
  CHECK(evaluate(p, env).value == Value(std::int64_t{42}));
}

TEST_CASE("pretty print is a parse fixed point") {
  const std::vector<std::string> corpus = {
      "2 + 3",
      "-2 * -(3 - 4) / 5",
      "1.5e-7 + 0.1 + 3.0",
      "not true or false and 1 < 2",
      R"(["Northland", "Eastmark", "tab\there \"q\""])",
      R"(mean(sel("t2m", mask(geocode("Northland")))))",
      R"(let f = sel("t2m", point(12.0, 30.0)); time_offset_hours(argmax_time(f)))",
      R"(let r = features("country"); nth(name(r), argmax(region_stat(r, "t2m", "mean"))))",
      R"(let d = forecast(24); max(apply(sel(d, "t2m"), "Northland")) - max(apply(sel(d, "t2m"), "Eastmark")))",
      R"(area((at(sel("t2m"), 0) > quantile(at(sel("t2m"), 0), 0.9)) and (at(sel("msl"), 0) > 101000)))",
      R"(counterfactual_delta("t2m", point(50, 20), 3.0, 2.0, point(52, 25), 24, 0.5))",
      "let a = 1;\nlet b = a * 2;\n[a, b, [a == b, a != b, a >= b]]",
  };
  for (const auto& src : corpus) {
    CAPTURE(src);
    const ToolProgram p = parse(src);
    const std::string printed = pretty_print(p);
    const ToolProgram q = parse(printed);
    CHECK(ast_equal(p, q));
    CHECK(pretty_print(q) == printed);
  }
  CHECK_FALSE(ast_equal(parse("1 + 2"), parse("2 + 1")));
  CHECK_FALSE(ast_equal(parse("1.0"), parse("1")));
}

TEST_CASE("evaluate: scalars, units, and errors") {
  CHECK(run("2 + 3") == Value(std::int64_t{5}));
  CHECK(run("7 / 2") == Value(Real{3.5, ""}));
  CHECK(run("2 * 3 - 10") == Value(std::int64_t{-4}));
  CHECK(run("1 < 2 and not (3 == 4)") == Value(true));
  CHECK(run("false and 1 / 0 == 1") == Value(false));
  CHECK(run(R"("ab" + "cd")") == Value(std::string("abcd")));
  CHECK(run("hours(6) * 5") == Value(Hours{30}));
  CHECK(run("time_offset_hours(5)") == Value(Hours{30}));
  CHECK(run("geodesic_km(0, 0, 0, 180)").as<Real>().units == "km");
  CHECK(run("geodesic_km(point(0, 0), point(0, 180))").as<Real>().value ==
        doctest::Approx(20015.09).epsilon(1e-6));
  CHECK(run("[3, 1, 2] == [3, 1, 2]") == Value(true));
  CHECK(run("max([3, 1, 2])") == Value(std::int64_t{3}));
  CHECK(run("sum([1, 2, 3])") == Value(std::int64_t{6}));
  CHECK(run("median([4, 1, 3, 2])") == Value(Real{2.5, ""}));
  CHECK(run("quantile([0, 1, 2, 3], 0.5)") == Value(Real{1.5, ""}));
  CHECK(run("argmin([3, 1, 2])") == Value(std::int64_t{1}));
  CHECK(run("nth([3, 1, 2], -1)") == Value(std::int64_t{2}));
  CHECK(run("round(2.345, 2)") == Value(Real{2.35, ""}));
  CHECK(run("len(range(4))") == Value(std::int64_t{4}));

  CHECK(error_code("1 / 0") == "arithmetic_error");
  CHECK(error_code("9223372036854775807 + 1") == "arithmetic_error");
  CHECK(error_code("1 + true") == "type_error");
  CHECK(error_code("not 1") == "type_error");
  CHECK(error_code("nth([1], 3)") == "value_error");
  CHECK(error_code("time_offset_hours(-1)") == "value_error");
  CHECK(error_code("point(91, 0)") == "value_error");
  CHECK(error_code("geodesic_km(1, 2, 3)") == "arity_mismatch");
  CHECK(error_code("hours(1) + lat(point(1, 2))") == "type_error");
  Diagnostic d;
  CHECK(error_code(R"(mean(sel("t2m")))", {}, {}, &d) == "tool_error");
  CHECK(d.col == 6);
  CHECK(d.message.find("no dataset") != std::string::npos);
}

TEST_CASE("evaluate: step and wall-clock budgets") {
  Diagnostic d;
  CHECK(error_code("sum(range(1000000000))", {}, {}, &d) == "budget_exceeded");
  CHECK(d.col == 5);
  CHECK(error_code("sum(range(100))", {}, Budget{50, 30000}) == "budget_exceeded");
  const auto r = evaluate(parse("sum(range(100))"), {}, Budget{200, 30000});
  CHECK(r.value == Value(std::int64_t{4950}));
  CHECK(r.steps <= 200);

  const auto t0 = std::chrono::steady_clock::now();
  CHECK(error_code("sleep(2000)", {}, Budget{1'000'000, 50}) == "timeout");
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  CHECK(ms.count() >= 50);
  CHECK(ms.count() < 150);
}

TEST_CASE("format_value") {
  CHECK(format_value(Real{288.4567, "K"}) == "288.457 K");
  CHECK(format_value(Hours{30}) == "30 h");
  CHECK(format_value(Value::list({std::string("Northland"), std::string("Eastmark")})) ==
        R"(["Northland", "Eastmark"])");
  CHECK(format_value(std::int64_t{2}) == "2");
  CHECK(format_value(Real{-0.0, ""}) == "0");
  CHECK(format_value(Real{1.0e-7, "kg kg-1"}) == "1e-07 kg kg-1");
  CHECK(format_value(Real{123456789.0, "Pa"}) == "1.23457e+08 Pa");
  CHECK(format_value(true) == "true");
  CHECK(format_value(LatLon{12, 30.75}) == "(12, 30.75)");
  CHECK(format_value(FeatureRef{"nl", "Northland"}) == "Northland");
  CHECK(format_value(Value::list({FeatureRef{"nl", "Northland"}, Hours{6}})) == R"(["Northland", 6 h])");
  CHECK(format_value(std::string("plain")) == "plain");
  CHECK(run("1 + 1") == Value(std::int64_t{2}));
  CHECK(format_value(run("1 + 1")) == "2");
}

TEST_CASE("planted maximum gives hours from start") {
  const grid::GridSpec spec = grid::make_subgrid(65, 17, 8, 8);  // holds (12N, 30E)
  const std::size_t T = 10, C = spec.n_cells();
  std::vector<double> values(T * C, 280.0);
  const std::size_t target = spec.cell(spec.nearest_lat(12.0), spec.nearest_lon(30.0));
  REQUIRE(spec.lat_points[target / 8] == 12.0);
  REQUIRE(spec.lon_points[target % 8] == 30.0);
  values[5 * C + target] = 300.0;
  values[7 * C + (target + 1) % C] = 310.0;  // hotter elsewhere, but not at the point
  grid::GridDataset ds(spec, 1577836800, T);
  ds.add_variable("temperature_2m", "K", values);
  Environment env;
  env.datasets.push_back(std::make_shared<const grid::GridDataset>(ds));
  const Value v = run(R"(time_offset_hours(argmax_time(sel("t2m", point(12.0, 30.0)))))", env);
  CHECK(v == Value(Hours{30}));
  CHECK(format_value(v) == "30 h");
  CHECK(run(R"(argmax(sel("t2m", point(12.0, 30.0))))", env) == Value(std::int64_t{5}));
  CHECK(run(R"(timestamp(sel("t2m"), 5))", env) == Value(std::string("2020-01-02T06:00:00Z")));
  CHECK(run(R"(argmax_cell(at(sel("t2m"), 7)))", env) ==
        Value(LatLon{spec.lat_points[((target + 1) % C) / 8], spec.lon_points[((target + 1) % C) % 8]}));
}

TEST_CASE("masked reductions equal brute-force loops") {
  const auto& geo = block_geo();
  REQUIRE(!geo.cells_of("northland").empty());
  std::mt19937_64 rng(7);
  const std::vector<std::string> regions = {"Northland", "Southvale", "Borealia"};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Environment env = block_env(seed);
    const grid::GridDataset& ds = *env.datasets[0];
    for (const auto& region : regions) {
      CAPTURE(seed);
      CAPTURE(region);
      const auto& feat = geo::geocode(geo, region);
      const auto& cells = geo.cells_of(feat.id);
      REQUIRE(!cells.empty());
      std::vector<double> all;
      for (std::size_t t = 0; t < ds.n_times(); ++t)
        for (std::size_t c : cells) all.push_back(ds.slice("temperature_2m", t)[c]);

      double s = 0, lo = 1e300, hi = -1e300;
      for (double v : all) {
        s += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      std::vector<double> sorted = all;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      const double median = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2;
      const double q = std::uniform_real_distribution<double>(0, 1)(rng);
      const double h = (n - 1) * q;
      const std::size_t k = static_cast<std::size_t>(h);
      const double quant = sorted[k] + (h - k) * (sorted[std::min(k + 1, n - 1)] - sorted[k]);

      const std::string sel = "sel(\"t2m\", mask(geocode(\"" + region + "\")))";
      auto real = [&](const std::string& src) { return run(src, env).as<Real>().value; };
      CHECK(real("mean(" + sel + ")") == doctest::Approx(s / n).epsilon(1e-12));
      CHECK(real("sum(" + sel + ")") == doctest::Approx(s).epsilon(1e-12));
      CHECK(real("min(" + sel + ")") == lo);
      CHECK(real("max(" + sel + ")") == hi);
      CHECK(real("median(" + sel + ")") == median);
      char qs[32];
      std::snprintf(qs, sizeof qs, "%.17g", q);
      CHECK(real("quantile(" + sel + ", " + qs + ")") == doctest::Approx(quant).epsilon(1e-12));

      // Threshold count and the time/space axes.
      const double thr = median;
      std::int64_t above = 0;
      for (double v : all) above += v > thr;
      char ts[32];
      std::snprintf(ts, sizeof ts, "%.17g", thr);
      const Value cnt = run("count(" + sel + " > " + ts + ")", env);
      CHECK(cnt == Value(above));

      const Value tv = run("mean(" + sel + ", \"time\")", env);
      const auto& tmean = *tv.as<std::shared_ptr<const FieldData>>();
      REQUIRE(tmean.values.size() == cells.size());
      for (std::size_t c = 0; c < cells.size(); ++c) {
        double acc = 0;
        for (std::size_t t = 0; t < ds.n_times(); ++t) acc += ds.slice("t2m", t)[cells[c]];
        CHECK(tmean.values[c] == doctest::Approx(acc / ds.n_times()).epsilon(1e-12));
      }
      const Value sv = run("max(" + sel + ", \"space\")", env);
      const auto& smax = *sv.as<std::shared_ptr<const FieldData>>();
      REQUIRE(smax.values.size() == ds.n_times());
      for (std::size_t t = 0; t < ds.n_times(); ++t) {
        double m = -1e300;
        for (std::size_t c : cells) m = std::max(m, ds.slice("t2m", t)[c]);
        CHECK(smax.values[t] == m);
      }

      // apply() on a full field selects the same cells as sel(..., region).
      CHECK(run("apply(sel(\"t2m\"), \"" + region + "\")", env) == run(sel, env));
      double km2 = 0;
      for (std::size_t c : cells) km2 += grid::cell_area_km2(block(), c / 8);
      CHECK(real("area(mask(\"" + region + "\"))") == doctest::Approx(km2).epsilon(1e-12));
    }
  }
}

TEST_CASE("evaluate is pure for a fixed environment") {
  const Environment env = block_env(3);
  const std::vector<std::string> programs = {
      R"(mean(sel("t2m", mask(geocode("Northland")))))",
      R"(let r = ["Northland", point(43.5, 7.5)]; sel("msl", r) - apply(mean(sel("msl"), "time"), r))",
      R"(let r = [geocode("Northland"), geocode("Southvale")]; [name(r), region_stat(r, "u10", "max")])",
      R"(print(quantile(sel("u10"), 0.25)))",
  };
  for (const auto& src : programs) {
    CAPTURE(src);
    const ToolProgram p = parse(src);
    const auto a = evaluate(p, env);
    const auto b = evaluate(p, env);
    CHECK(a.value == b.value);
    CHECK(a.stdout_text == b.stdout_text);
    CHECK(a.steps == b.steps);
  }
  CHECK(evaluate(parse(R"(let a = print(1.5); print("x"))"), env).stdout_text == "1.5\nx\n");
}

TEST_CASE("field typing rules") {
  const Environment env = block_env(4);
  Diagnostic d;
  CHECK(error_code(R"(sel("t2m") + sel("msl"))", env, {}, &d) == "type_error");
  CHECK(d.message.find("incompatible units") != std::string::npos);
  CHECK(error_code(R"(sel("t2m", "Northland") - sel("t2m", "Southvale"))", env) == "type_error");
  CHECK(error_code(R"(sel("nope"))", env) == "tool_error");
  CHECK(error_code(R"(mean(sel("t2m"), "depth"))", env) == "value_error");
  CHECK(error_code(R"(geocode("Mordor"))", env) == "tool_error");
  CHECK(error_code(R"(window(sel("t2m"), 3, 2))", env) == "value_error");
  CHECK(error_code(R"(area(sel("t2m")))", env) == "type_error");
  const Value ratio = run(R"(mean(sel("t2m")) / mean(sel("t2m")))", env);
  CHECK(ratio.as<Real>().units.empty());
  CHECK(run(R"(mean(sel("t2m")) * 2)", env).as<Real>().units == "K");
  CHECK(run(R"(n_steps(window(data(), 1, 4)))", env) == Value(std::int64_t{3}));
  CHECK(run(R"(variables())", env) ==
        Value::list({std::string("mean_sea_level_pressure"), std::string("temperature_2m"),
                     std::string("wind_u_10m")}));
  CHECK(run(R"(name(reverse_geocode(point(48, 12))))", env) ==
        Value::list({std::string("Northland"), std::string("Borealia")}));
  CHECK(run(R"(name(sublocations("Borealia")))", block_env(1)).as<std::shared_ptr<const List>>()->size() == 4);
  const Value dv = run(R"(region_distribution("Northland"))", env);
  const auto& dist = *dv.as<std::shared_ptr<const FieldData>>();
  double total = 0;
  for (double m : dist.values) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("model tools") {
  Environment env = block_env(5);
  const auto forecaster = models::make_forecaster("persistence");
  const auto simulator = models::make_simulator("advdiff");
  env.forecaster = forecaster.get();
  env.simulator = simulator.get();
  CHECK(run("n_steps(forecast(12))", env) == Value(std::int64_t{2}));
  CHECK(run("n_steps(simulate(0.5, 24))", env) == Value(std::int64_t{5}));
  CHECK(run(R"(counterfactual_delta("t2m", point(48, 12), 2.0, 0.0, point(48, 12), 24))", env) ==
        Value(Real{0.0, "K"}));
  const double s = run(R"(change_summary(simulate(0.37, 24), "t2m"))", env).as<Real>().value;
  char buf[64];
  std::snprintf(buf, sizeof buf, R"(fit_alpha("t2m", %.17g))", s);
  CHECK(run(buf, env).as<Real>().value == doctest::Approx(0.37).epsilon(0.02 / 0.37));
  CHECK(error_code("forecast(7)", env) == "tool_error");
  env.forecaster = nullptr;
  CHECK(error_code("forecast(12)", env) == "tool_error");
}

TEST_CASE("builtin reference lists every builtin") {
  const std::string ref = builtin_reference();
  for (const auto& b : builtins()) CHECK(ref.find("`" + b.name) != std::string::npos);
  CHECK(find_builtin("frobnicate") == nullptr);
  CHECK(find_builtin("geocode")->tools == std::vector<ToolKind>{ToolKind::geolocator});
}
