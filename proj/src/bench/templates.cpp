#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "internal.hpp"
#include "stratus/models.hpp"

namespace stratus::bench {

using namespace detail;
using nlohmann::json;
using eval::AnswerKind;
using eval::Rule;

const std::vector<TaskTemplate>& templates() {
  static const std::vector<TaskTemplate> table = {
      {1, "Which {geofeature} experienced the {extremum_direction} average {variable} between {start} and {end}?",
       Difficulty::easy, AnswerKind::location, Rule::location, "location_match",
       {"geofeature", "extremum_direction", "variable", "time_window"}},
      {2, "What is the {stat} {variable} in {geofeature} between {start} and {end}?", Difficulty::easy,
       AnswerKind::numeric, Rule::sae, "sae", {"stat", "variable", "geofeature", "time_window"}},
      {3, "Which sublocation of {geofeature} recorded the {extremum_direction} {variable} between {start} and {end}?",
       Difficulty::easy, AnswerKind::location, Rule::location, "location_match",
       {"geofeature", "extremum_direction", "variable", "time_window"}},
      {4, "How many hours after {start} did {geofeature} experience its {extremum_direction} spatially averaged "
          "{variable}, considering steps up to {end}?",
       Difficulty::easy, AnswerKind::hours, Rule::hours, "abs_hours",
       {"geofeature", "extremum_direction", "variable", "time_window"}},
      {5, "What is the {variable} at latitude {lat}, longitude {lon} at {time}?", Difficulty::easy,
       AnswerKind::numeric, Rule::sae, "sae", {"variable", "location", "time_window"}},
      {6, "What will the spatially averaged {variable} over {geofeature} be {horizon} hours after {end}?",
       Difficulty::medium, AnswerKind::numeric, Rule::sae, "sae", {"variable", "geofeature", "horizon", "time_window"}},
      {7, "Within the {horizon} hours after {end}, how many hours after {end} will {geofeature} experience its "
          "{extremum_direction} spatially averaged {variable}?",
       Difficulty::medium, AnswerKind::hours, Rule::hours, "abs_hours",
       {"horizon", "geofeature", "extremum_direction", "variable", "time_window"}},
      {10, "Which {geofeature} experienced unusual {variable} anomalies between {start} and {end} compared to the "
           "reference period?",
       Difficulty::medium, AnswerKind::location_list, Rule::emd, "emd", {"geofeature", "variable", "time_window"}},
      {12, "Does the maximum {variable} in {region_a} between {start} and {end} remain lower than its maximum over "
           "the following {horizon} hours?",
       Difficulty::medium, AnswerKind::boolean, Rule::boolean, "exact", {"variable", "region_a", "time_window", "horizon"}},
      {16, "Will the mean {variable} within {region_a} over the {horizon} hours after {end} exceed {threshold}?",
       Difficulty::medium, AnswerKind::boolean, Rule::boolean, "exact",
       {"variable", "region_a", "horizon", "threshold", "time_window"}},
      {22, "Will the maximum {variable} within {region_a} over the {horizon} hours after {end} exceed {threshold}?",
       Difficulty::medium, AnswerKind::boolean, Rule::boolean, "exact",
       {"variable", "region_a", "horizon", "threshold", "time_window"}},
      {27, "What area of {region_a}, in km2, will have {variable} above its {percentile_a}th percentile and "
           "{variable_b} above its {percentile_b}th percentile {horizon} hours after {end}?",
       Difficulty::medium, AnswerKind::numeric, Rule::relative, "relative",
       {"region_a", "variable", "variable_b", "threshold", "horizon", "time_window"}},
      {30, "What will be the distance in km between the locations of maximum {variable} in {region_a} and in "
           "{region_b} {horizon} hours after {end}?",
       Difficulty::medium, AnswerKind::numeric, Rule::relative, "relative",
       {"variable", "region_a", "region_b", "horizon", "time_window"}},
      {33, "What will be the maximum {variable} in {region_a} minus the maximum in {region_b} {horizon} hours after "
           "{end}?",
       Difficulty::medium, AnswerKind::numeric, Rule::sae, "sae",
       {"variable", "region_a", "region_b", "horizon", "time_window"}},
      {44, "If {variable} is perturbed by {amplitude} in a Gaussian bump of width {sigma_deg} degrees centred at "
           "{center}, how much will {variable} at {probe} change after {horizon} hours of simulation?",
       Difficulty::hard, AnswerKind::numeric, Rule::sae, "sae",
       {"variable", "amplitude", "location", "horizon", "time_window"}},
      {45, "A simulation from {end} with an unknown parameter alpha in [0, 1] changed {variable} by a global mean "
           "absolute {target} over {horizon} hours. What is alpha?",
       Difficulty::hard, AnswerKind::numeric, Rule::relative, "relative", {"variable", "horizon", "time_window"}},
      {46, "Is the following claim supported by the data for the 24 hours starting {start}? Claim: {claim}",
       Difficulty::hard, AnswerKind::boolean, Rule::boolean, "exact", {"claim", "time_window"}},
  };
  return table;
}

const TaskTemplate& find_template(int id) {
  for (const auto& t : templates())
    if (t.id == id) return t;
  throw Error("unknown_template", "template " + std::to_string(id) + " is not implemented");
}

namespace {

const char* kind_plural(const std::string& kind) {
  if (kind == "country") return "countries";
  if (kind == "continent") return "continents";
  if (kind == "ocean") return "oceans";
  return "regions";
}

std::string quoted(const std::string& s) { return json(s).dump(); }

std::string stat_word(const std::string& stat) {
  static const std::map<std::string, std::string> words = {
      {"mean", "average"}, {"max", "maximum"}, {"min", "minimum"}, {"median", "median"}};
  return words.at(stat);
}

struct Draft {
  json b = json::object();
  std::string question;
  std::vector<std::string> refs;
  std::string program;
  std::optional<Claim> claim;
};

class Builder {
 public:
  Builder(Sampler& rng, const catalog::Catalog& cat) : rng_(rng), cat_(cat), ds_(cat.primary_dataset()) {}

  std::string variable(const char* key = "variable") {
    const std::string v = rng_.pick(ds_.variable_names());
    d.b[key] = v;
    return v;
  }

  /// Past window [t0, t1) of 4 or 8 steps.
  void past_window() {
    const std::size_t n = ds_.n_times();
    std::vector<std::size_t> lengths;
    for (std::size_t l : {4, 8})
      if (l <= n) lengths.push_back(l);
    if (lengths.empty()) lengths.push_back(n);
    const std::size_t len = rng_.pick(lengths);
    const std::size_t t0 = rng_.index(n - len + 1);
    set_window(t0, t0 + len);
  }

  /// Past window followed by a horizon whose actual steps exist.
  void forecast_window() {
    const std::size_t n = ds_.n_times();
    const int step = ds_.spec().step_hours;
    std::vector<int> horizons;
    for (int h : {12, 24, 48})
      if (h % step == 0 && static_cast<std::size_t>(h / step) + 4 <= n) horizons.push_back(h);
    if (horizons.empty()) throw Error("sampler_exhausted", "dataset too short for a forecast horizon");
    const int h = rng_.pick(horizons);
    const std::size_t len = 4;
    const std::size_t hs = static_cast<std::size_t>(h / step);
    const std::size_t t1 = len + rng_.index(n - hs - len + 1);
    set_window(t1 - len, t1);
    d.b["horizon_hours"] = h;
  }

  void set_window(std::size_t t0, std::size_t t1) {
    d.b["t0"] = t0;
    d.b["t1"] = t1;
    d.b["start"] = ts(t0);
    d.b["end"] = ts(t1 - 1);
    d.refs = {catalog::slice_ref(cat_.primary, t0, t1)};
  }

  std::string ts(std::size_t t) const {
    return grid::format_iso8601(ds_.start_epoch_s() + static_cast<std::int64_t>(t) * ds_.spec().step_hours * 3600);
  }

  std::string feature(const char* key, std::optional<geo::FeatureKind> kind = std::nullopt,
                      const std::string& exclude = "") {
    std::vector<const geo::GeoFeature*> pool;
    for (const auto* f : features_with_cells(*cat_.geo, kind))
      if (f->name != exclude) pool.push_back(f);
    const std::string name = rng_.pick(pool)->name;
    d.b[key] = name;
    return name;
  }

  std::string direction() {
    const std::string dir = rng_.coin() ? "highest" : "lowest";
    d.b["extremum_direction"] = dir;
    return dir;
  }

  Sampler& rng_;
  const catalog::Catalog& cat_;
  const grid::GridDataset& ds_;
  Draft d;
};

std::string kind_with_two(Sampler& rng, const geo::GeoIndex& index, std::vector<std::string> kinds) {
  std::vector<std::string> ok;
  for (const auto& k : kinds)
    if (features_with_cells(index, geo::parse_kind(k)).size() >= 2) ok.push_back(k);
  if (ok.empty()) throw Error("sampler_exhausted", "no feature kind with two features on the grid");
  return rng.pick(ok);
}

double sample_threshold(Sampler& rng, double v, double sigma) {
  const double offset = rng.uniform(0.05, 0.5) * sigma;
  return round_sig(rng.coin() ? v + offset : v - offset, 5);
}

Draft draft(int id, Sampler& rng, const catalog::Catalog& cat, const BenchConfig& cfg) {
  Builder k(rng, cat);
  const auto& ds = cat.primary_dataset();
  auto& b = k.d.b;
  auto S = [&](const char* key) { return b[key].get<std::string>(); };
  switch (id) {
    case 1: {
      const std::string kind = kind_with_two(rng, *cat.geo, {"country", "continent", "ocean"});
      b["geofeature"] = kind;
      const std::string dir = k.direction();
      const std::string var = k.variable();
      k.past_window();
      k.d.question = "Which " + kind + " experienced the " + dir + " average " + var_text(var) + " between " +
                     S("start") + " and " + S("end") + "?";
      k.d.program = "let fs = features(" + quoted(kind) + ");\nlet vals = region_stat(fs, " + quoted(var) +
                    ", \"mean\");\nname(nth(fs, " + (dir == "highest" ? "argmax" : "argmin") + "(vals)))\n";
      break;
    }
    case 2: {
      const std::string stat = rng.pick(std::vector<std::string>{"min", "max", "mean", "median"});
      b["stat"] = stat;
      const std::string var = k.variable();
      const std::string where = k.feature("location");
      k.past_window();
      k.d.question = "What is the " + stat_word(stat) + " " + var_text(var) + " in " + where + " between " +
                     S("start") + " and " + S("end") + "?";
      k.d.program = stat + "(sel(" + quoted(var) + ", " + quoted(where) + "))\n";
      break;
    }
    case 3: {
      std::vector<std::string> parents;
      for (const auto* f : features_with_cells(*cat.geo)) {
        std::size_t n = 0;
        for (const auto* s : geo::sublocations(*cat.geo, f->id)) n += !cat.geo->cells_of(s->id).empty();
        if (n >= 2) parents.push_back(f->name);
      }
      if (parents.empty()) throw Error("sampler_exhausted", "no feature with two sublocations on the grid");
      const std::string parent = rng.pick(parents);
      b["location"] = parent;
      const std::string dir = k.direction();
      const std::string var = k.variable();
      k.past_window();
      k.d.question = "Which sublocation of " + parent + " recorded the " + dir + " " + var_text(var) +
                     " between " + S("start") + " and " + S("end") + "?";
      k.d.program = "let subs = sublocations(" + quoted(parent) + ");\nlet vals = region_stat(subs, " + quoted(var) +
                    ", " + (dir == "highest" ? "\"max\"" : "\"min\"") + ");\nname(nth(subs, " +
                    (dir == "highest" ? "argmax" : "argmin") + "(vals)))\n";
      break;
    }
    case 4: {
      const std::string where = k.feature("location");
      const std::string dir = k.direction();
      const std::string var = k.variable();
      k.past_window();
      k.d.question = "How many hours after " + S("start") + " did " + where + " experience its " + dir +
                     " spatially averaged " + var_text(var) + ", considering steps up to " + S("end") + "?";
      k.d.program = std::string("time_offset_hours(") + (dir == "highest" ? "argmax_time" : "argmin_time") +
                    "(sel(" + quoted(var) + ", " + quoted(where) + ")))\n";
      break;
    }
    case 5: {
      const std::string var = k.variable();
      k.past_window();
      const auto& spec = ds.spec();
      const double lat = spec.lat_points[rng.index(spec.n_lat())];
      const double lon = spec.lon_points[rng.index(spec.n_lon())];
      const std::size_t t0 = b["t0"], t1 = b["t1"];
      const std::size_t t = t0 + rng.index(t1 - t0);
      b["lat"] = lat;
      b["lon"] = lon;
      b["t"] = t;
      b["time"] = k.ts(t);
      k.d.question = "What is the " + var_text(var) + " at latitude " + fmt(lat) + ", longitude " + fmt(lon) +
                     " at " + k.ts(t) + "?";
      k.d.program = "mean(at(sel(" + quoted(var) + ", point(" + fmt(lat) + ", " + fmt(lon) + ")), " +
                    std::to_string(t - t0) + "))\n";
      break;
    }
    case 6: {
      const std::string var = k.variable();
      const std::string where = k.feature("location");
      k.forecast_window();
      k.d.question = "What will the spatially averaged " + var_text(var) + " over " + where + " be " +
                     std::to_string(b["horizon_hours"].get<int>()) + " hours after " + S("end") + "?";
      break;
    }
    case 7: {
      const std::string where = k.feature("location");
      const std::string dir = k.direction();
      const std::string var = k.variable();
      k.forecast_window();
      const std::string h = std::to_string(b["horizon_hours"].get<int>());
      k.d.question = "Within the " + h + " hours after " + S("end") + ", how many hours after " + S("end") +
                     " will " + where + " experience its " + dir + " spatially averaged " + var_text(var) + "?";
      break;
    }
    case 10: {
      const auto& base = *cat.dataset(cfg.baseline);
      const std::string kind = kind_with_two(rng, *cat.geo, {"country", "ocean"});
      b["geofeature"] = kind;
      std::vector<std::string> vars;
      for (const auto& v : ds.variable_names())
        if (base.has_variable(v)) vars.push_back(v);
      const std::string var = rng.pick(vars);
      b["variable"] = var;
      k.past_window();
      k.d.refs.push_back(cfg.baseline);
      k.d.question = std::string("Which ") + kind_plural(kind) + " experienced unusual " + var_text(var) +
                     " anomalies between " + S("start") + " and " + S("end") +
                     " compared to the reference period in the second dataset? List every such " + kind +
                     ", or answer none.";
      break;
    }
    case 12: {
      const std::string var = k.variable();
      const std::string where = k.feature("region");
      k.forecast_window();
      k.d.question = "Does the maximum " + var_text(var) + " in " + where + " between " + S("start") + " and " +
                     S("end") + " remain lower than its maximum over the following " +
                     std::to_string(b["horizon_hours"].get<int>()) + " hours?";
      break;
    }
    case 16:
    case 22: {
      const std::string var = k.variable();
      const std::string where = k.feature("region");
      k.forecast_window();
      const std::size_t t1 = b["t1"], hs = steps_of(b["horizon_hours"].get<int>(), ds.spec());
      const auto xs = region_values(ds, var, cells_named(*cat.geo, where), t1, t1 + hs);
      const double v = id == 16 ? mean_of(xs) : *std::max_element(xs.begin(), xs.end());
      const double thr = sample_threshold(rng, v, cat.stats.sigma(var));
      b["threshold"] = thr;
      k.d.question = std::string("Will the ") + (id == 16 ? "mean " : "maximum ") + var_text(var) + " within " +
                     where + " over the " + std::to_string(b["horizon_hours"].get<int>()) + " hours after " +
                     S("end") + " exceed " + fmt(thr) + " " + ds.units(var) + "?";
      break;
    }
    case 27: {
      const std::string va = k.variable("variable_a");
      std::vector<std::string> others;
      for (const auto& v : ds.variable_names())
        if (v != va) others.push_back(v);
      const std::string vb = others.empty() ? va : rng.pick(others);
      b["variable_b"] = vb;
      const std::string where = k.feature("region");
      const double pa = rng.pick(std::vector<double>{50, 75, 90});
      const double pb = rng.pick(std::vector<double>{50, 75, 90});
      b["percentile_a"] = pa;
      b["percentile_b"] = pb;
      k.forecast_window();
      k.d.question = "What area of " + where + ", in km2, will have " + var_text(va) + " above its " + fmt(pa) +
                     "th percentile and " + var_text(vb) + " above its " + fmt(pb) +
                     "th percentile over that region " + std::to_string(b["horizon_hours"].get<int>()) +
                     " hours after " + S("end") + "?";
      break;
    }
    case 30:
    case 33: {
      const std::string var = k.variable();
      const std::string a = k.feature("region_a", geo::FeatureKind::country);
      const std::string c = k.feature("region_b", geo::FeatureKind::country, a);
      k.forecast_window();
      const std::string h = std::to_string(b["horizon_hours"].get<int>());
      if (id == 30)
        k.d.question = "What will be the distance in km between the locations of maximum " + var_text(var) +
                       " in " + a + " and in " + c + " " + h + " hours after " + S("end") + "?";
      else
        k.d.question = "What will be the maximum " + var_text(var) + " in " + a + " minus the maximum in " + c +
                       " " + h + " hours after " + S("end") + "?";
      break;
    }
    case 44: {
      const std::string var = k.variable();
      const std::size_t n = ds.n_times();
      const std::size_t len = std::min<std::size_t>(4, n);
      const std::size_t t0 = rng.index(n - len + 1);
      k.set_window(t0, t0 + len);
      const auto& spec = ds.spec();
      const std::size_t ci = rng.index(spec.n_lat()), cj = rng.index(spec.n_lon());
      auto near = [&](std::size_t c, std::size_t size) {
        const std::size_t lo = c >= 2 ? c - 2 : 0, hi = std::min(size - 1, c + 2);
        return lo + rng.index(hi - lo + 1);
      };
      const std::size_t pi = near(ci, spec.n_lat()), pj = near(cj, spec.n_lon());
      const double sigma_deg = rng.pick(std::vector<double>{3, 5, 8});
      const double amp = round_sig((rng.coin() ? 1.0 : -1.0) * rng.uniform(0.2, 1.0) * cat.stats.sigma(var), 3);
      const int hours = rng.pick(std::vector<int>{6, 12, 24});
      b["center_lat"] = spec.lat_points[ci];
      b["center_lon"] = spec.lon_points[cj];
      b["probe_lat"] = spec.lat_points[pi];
      b["probe_lon"] = spec.lon_points[pj];
      b["sigma_deg"] = sigma_deg;
      b["amplitude"] = amp;
      b["hours"] = hours;
      const std::string center = "(" + fmt(spec.lat_points[ci]) + ", " + fmt(spec.lon_points[cj]) + ")";
      const std::string probe = "(" + fmt(spec.lat_points[pi]) + ", " + fmt(spec.lon_points[pj]) + ")";
      k.d.question = "Starting the simulator (default setting alpha = " + fmt(cfg.sim_alpha) + ") from " + S("end") +
                     ", if " + var_text(var) + " is perturbed by " + fmt(amp) + " " + ds.units(var) +
                     " in a Gaussian bump of width " + fmt(sigma_deg) + " degrees centred at " + center +
                     ", how much will " + var + " at " + probe + " change after " + std::to_string(hours) +
                     " hours of simulation?";
      k.d.program = "counterfactual_delta(" + quoted(var) + ", point" + center + ", " + fmt(sigma_deg) + ", " +
                    fmt(amp) + ", point" + probe + ", " + std::to_string(hours) + ", " + fmt(cfg.sim_alpha) + ")\n";
      break;
    }
    case 45: {
      const std::string var = k.variable();
      const std::size_t n = ds.n_times();
      const std::size_t len = std::min<std::size_t>(4, n);
      const std::size_t t0 = rng.index(n - len + 1);
      k.set_window(t0, t0 + len);
      const int hours = rng.pick(std::vector<int>{12, 24});
      const double alpha = std::round(rng.uniform(0.05, 0.95) * 1000.0) / 1000.0;
      models::SimConfig sc;
      sc.total_hours = hours;
      sc.param_alpha = alpha;
      const auto sim = models::make_simulator(cfg.simulator);
      const double target = round_sig(models::change_summary(sim->simulate(ds.slice_time(t0, t0 + len), sc), var, hours), 8);
      b["alpha"] = alpha;
      b["hours"] = hours;
      b["target"] = target;
      k.d.question = "A simulation was started from the last step of the attached data (" + S("end") +
                     ") with the simulator parameter alpha set to an unknown value in [0, 1]. After " +
                     std::to_string(hours) + " hours the global mean absolute change of " + var_text(var) + " was " +
                     fmt(target) + " " + ds.units(var) + ". What value of alpha was used?";
      break;
    }
    case 46: {
      const std::string var = k.variable();
      const std::string where = k.feature("region");
      const std::size_t steps = steps_of(24, ds.spec());
      if (ds.n_times() < steps) throw Error("sampler_exhausted", "dataset shorter than 24 hours");
      const std::size_t t0 = rng.index(ds.n_times() - steps + 1);
      k.set_window(t0, t0 + steps);
      const std::string stat = rng.pick(std::vector<std::string>{"mean", "max", "min"});
      const auto xs = region_values(ds, var, cells_named(*cat.geo, where), t0, t0 + steps);
      const double v = stat == "mean" ? mean_of(xs)
                       : stat == "max" ? *std::max_element(xs.begin(), xs.end())
                                       : *std::min_element(xs.begin(), xs.end());
      Claim c;
      c.check = {var, where, stat, rng.coin() ? "above" : "below", sample_threshold(rng, v, cat.stats.sigma(var))};
      c.timestamp = S("start");
      c.source = "generated";
      c.text = "During the 24 hours from " + c.timestamp + ", the " + stat_word(stat) + " " + var_text(var) +
               " over " + where + " was " + c.check.comparison + " " + fmt(c.check.threshold) + " " + ds.units(var) +
               ".";
      if (rng.coin()) {
        c.negated = true;
        c.original = c.text;
        c.text = "During the 24 hours from " + c.timestamp + ", the " + stat_word(stat) + " " + var_text(var) +
                 " over " + where + " was not " + c.check.comparison + " " + fmt(c.check.threshold) + " " +
                 ds.units(var) + ".";
      }
      b["variable"] = var;
      b["stat"] = stat;
      b["comparison"] = c.check.comparison;
      b["threshold"] = c.check.threshold;
      b["negated"] = c.negated;
      b["claim"] = c.text;
      k.d.question = "Is the following claim supported by the data for the 24 hours starting " + S("start") +
                     "? Claim: " + c.text + " Answer yes or no.";
      k.d.claim = c;
      break;
    }
    default: throw Error("unknown_template", "template " + std::to_string(id) + " is not implemented");
  }
  return k.d;
}

}  // namespace

TaskInstance instantiate(const TaskTemplate& tmpl, std::uint64_t seed, const catalog::Catalog& cat,
                         const BenchConfig& cfg) {
  Sampler rng(mix(seed, static_cast<std::uint64_t>(tmpl.id)));
  Draft d = draft(tmpl.id, rng, cat, cfg);
  TaskInstance t;
  char id[48];
  std::snprintf(id, sizeof id, "t%02d-%llu", tmpl.id, static_cast<unsigned long long>(seed));
  t.instance_id = id;
  t.template_id = tmpl.id;
  t.question = std::move(d.question);
  t.bindings = std::move(d.b);
  t.bindings["seed"] = seed;
  t.dataset_refs = std::move(d.refs);
  t.truth = oracle_lookup(tmpl.id)(t.bindings, cat, cfg);
  t.metric = tmpl.metric;
  t.rule = tmpl.rule;
  t.difficulty = tmpl.difficulty;
  t.reference_program = std::move(d.program);
  t.claim = std::move(d.claim);
  if (t.truth.kind != tmpl.kind) throw Error("oracle_failed", "oracle answered the wrong kind");
  return t;
}

std::vector<TaskInstance> generate_bench(std::uint64_t master_seed, const catalog::Catalog& cat, int per_template,
                                         const BenchConfig& cfg) {
  std::vector<TaskInstance> out;
  for (const auto& tmpl : templates())
    for (int k = 0; k < per_template; ++k)
      out.push_back(instantiate(tmpl, master_seed * 10000 + static_cast<std::uint64_t>(k), cat, cfg));
  return out;
}

}  // namespace stratus::bench
