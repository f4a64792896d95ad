#include <algorithm>
#include <cmath>
#include <map>

#include "internal.hpp"
#include "stratus/models.hpp"

namespace stratus::bench {

using namespace detail;
using nlohmann::json;

namespace {

struct Window {
  std::size_t t0, t1;
};

Window window(const json& b, const grid::GridDataset& ds) {
  Window w{get_size(b, "t0"), get_size(b, "t1")};
  if (w.t1 <= w.t0 || w.t1 > ds.n_times()) throw Error("bad_bindings", "time window outside the dataset");
  return w;
}

/// Step of the actual future state `horizon_hours` after the window's last step.
std::size_t future_step(const json& b, const grid::GridDataset& ds) {
  const Window w = window(b, ds);
  const std::size_t s = w.t1 - 1 + steps_of(static_cast<int>(get_size(b, "horizon_hours")), ds.spec());
  if (s >= ds.n_times()) throw Error("bad_bindings", "forecast horizon beyond the dataset");
  return s;
}

bool want_max(const json& b) { return get_string(b, "extremum_direction") == "highest"; }

double stat_of(const std::string& stat, const std::vector<double>& xs) {
  if (stat == "mean") return mean_of(xs);
  if (stat == "max") return *std::max_element(xs.begin(), xs.end());
  if (stat == "min") return *std::min_element(xs.begin(), xs.end());
  if (stat == "median") return median_of(xs);
  throw Error("bad_bindings", "unknown statistic '" + stat + "'");
}

// Template 1: feature of a kind with the extreme window mean.
AnswerSpec o1(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::string var = get_string(b, "variable");
  const auto feats = features_with_cells(*cat.geo, geo::parse_kind(get_string(b, "geofeature")));
  if (feats.empty()) throw Error("oracle_failed", "no feature of that kind on the grid");
  std::vector<double> means;
  for (const auto* f : feats) means.push_back(mean_of(region_values(ds, var, cat.geo->cells_of(f->id), w.t0, w.t1)));
  return location(feats[arg_extreme(means, want_max(b))]->name);
}

// Template 2: reduction over the masked cells and the window.
AnswerSpec o2(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::string var = get_string(b, "variable");
  const auto xs = region_values(ds, var, cells_named(*cat.geo, get_string(b, "location")), w.t0, w.t1);
  return numeric(stat_of(get_string(b, "stat"), xs), ds.units(var), cat.stats.sigma(var));
}

// Template 3: sublocation with the extreme recorded value.
AnswerSpec o3(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::string var = get_string(b, "variable");
  const bool hi = want_max(b);
  const auto& parent = geo::geocode(*cat.geo, get_string(b, "location"), 1.0);
  std::vector<const geo::GeoFeature*> subs;
  for (const auto* f : geo::sublocations(*cat.geo, parent.id))
    if (!cat.geo->cells_of(f->id).empty()) subs.push_back(f);
  if (subs.empty()) throw Error("oracle_failed", "no sublocation on the grid");
  std::vector<double> vals;
  for (const auto* f : subs) vals.push_back(stat_of(hi ? "max" : "min", region_values(ds, var, cat.geo->cells_of(f->id), w.t0, w.t1)));
  return location(subs[arg_extreme(vals, hi)]->name);
}

// Template 4: hours from the window start to the extreme spatial mean.
AnswerSpec o4(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const auto means = spatial_means(ds, get_string(b, "variable"), cells_named(*cat.geo, get_string(b, "location")), w.t0, w.t1);
  return hours_answer(grid::time_offset_hours(static_cast<std::int64_t>(arg_extreme(means, want_max(b))),
                                              ds.spec().step_hours));
}

// Template 5: value at the cell nearest a point at one step.
AnswerSpec o5(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const std::string var = get_string(b, "variable");
  const std::size_t t = get_size(b, "t");
  if (t >= ds.n_times()) throw Error("bad_bindings", "time step outside the dataset");
  const auto& spec = ds.spec();
  const double v = ds.at(var, t, spec.nearest_lat(get_double(b, "lat")), spec.nearest_lon(get_double(b, "lon")));
  return numeric(v, ds.units(var), cat.stats.sigma(var));
}

// Template 6: actual spatial mean horizon hours after the window.
AnswerSpec o6(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const std::string var = get_string(b, "variable");
  const std::size_t s = future_step(b, ds);
  const auto xs = region_values(ds, var, cells_named(*cat.geo, get_string(b, "location")), s, s + 1);
  return numeric(mean_of(xs), ds.units(var), cat.stats.sigma(var));
}

// Template 7: hours after the window's end of the extreme future spatial mean.
AnswerSpec o7(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::size_t last = future_step(b, ds);
  const auto means = spatial_means(ds, get_string(b, "variable"), cells_named(*cat.geo, get_string(b, "location")), w.t1, last + 1);
  const std::size_t k = arg_extreme(means, want_max(b)) + 1;
  return hours_answer(static_cast<double>(k) * ds.spec().step_hours);
}

// Template 10: features whose cells leave the reference quantile band.
AnswerSpec o10(const json& b, const catalog::Catalog& cat, const BenchConfig& cfg) {
  const auto& ds = cat.primary_dataset();
  const auto& base = *cat.dataset(cfg.baseline);
  const Window w = window(b, ds);
  const std::string var = get_string(b, "variable");
  const std::size_t C = ds.spec().n_cells();
  std::vector<char> odd(C, 0);
  std::vector<double> column(base.n_times());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < base.n_times(); ++t) column[t] = base.slice(var, t)[c];
    const double lo = quantile_of(column, cfg.anomaly_low_q), hi = quantile_of(column, cfg.anomaly_high_q);
    double recent = 0.0;
    for (std::size_t t = w.t0; t < w.t1; ++t) recent += ds.slice(var, t)[c];
    recent /= static_cast<double>(w.t1 - w.t0);
    odd[c] = recent < lo || recent > hi;
  }
  AnswerSpec a;
  a.kind = eval::AnswerKind::location_list;
  for (const auto* f : features_with_cells(*cat.geo, geo::parse_kind(get_string(b, "geofeature")))) {
    const auto& cells = cat.geo->cells_of(f->id);
    std::size_t n = 0;
    for (std::size_t c : cells) n += static_cast<std::size_t>(odd[c]);
    if (static_cast<double>(n) >= cfg.anomaly_fraction * static_cast<double>(cells.size())) a.names.push_back(f->name);
  }
  return a;
}

// Template 12: does the window maximum stay below the future maximum.
AnswerSpec o12(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::string var = get_string(b, "variable");
  const auto& cells = cells_named(*cat.geo, get_string(b, "region"));
  const std::size_t last = future_step(b, ds);
  const double past = stat_of("max", region_values(ds, var, cells, w.t0, w.t1));
  const double future = stat_of("max", region_values(ds, var, cells, w.t1, last + 1));
  return boolean(past < future);
}

AnswerSpec future_threshold(const json& b, const catalog::Catalog& cat, const char* stat) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::size_t last = future_step(b, ds);
  const auto xs = region_values(ds, get_string(b, "variable"), cells_named(*cat.geo, get_string(b, "region")), w.t1, last + 1);
  return boolean(stat_of(stat, xs) > get_double(b, "threshold"));
}

// Template 16: future regional mean above a threshold.
AnswerSpec o16(const json& b, const catalog::Catalog& cat, const BenchConfig&) { return future_threshold(b, cat, "mean"); }

// Template 22: future regional maximum above a threshold.
AnswerSpec o22(const json& b, const catalog::Catalog& cat, const BenchConfig&) { return future_threshold(b, cat, "max"); }

// Template 27: area where two variables both exceed their regional percentiles.
AnswerSpec o27(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const std::size_t s = future_step(b, ds);
  const auto& cells = cells_named(*cat.geo, get_string(b, "region"));
  const auto xa = region_values(ds, get_string(b, "variable_a"), cells, s, s + 1);
  const auto xb = region_values(ds, get_string(b, "variable_b"), cells, s, s + 1);
  const double qa = quantile_of(xa, get_double(b, "percentile_a") / 100.0);
  const double qb = quantile_of(xb, get_double(b, "percentile_b") / 100.0);
  double km2 = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k)
    if (xa[k] > qa && xb[k] > qb) km2 += grid::cell_area_km2(ds.spec(), cells[k] / ds.spec().n_lon());
  return numeric(km2, "km2", 1.0);
}

std::size_t argmax_cell(const grid::GridDataset& ds, const std::string& var, const std::vector<std::size_t>& cells,
                        std::size_t s) {
  return cells[arg_extreme(region_values(ds, var, cells, s, s + 1), true)];
}

// Template 30: distance between the maximum cells of two regions.
AnswerSpec o30(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const std::size_t s = future_step(b, ds);
  const std::string var = get_string(b, "variable");
  const std::size_t ca = argmax_cell(ds, var, cells_named(*cat.geo, get_string(b, "region_a")), s);
  const std::size_t cb = argmax_cell(ds, var, cells_named(*cat.geo, get_string(b, "region_b")), s);
  return numeric(geo::cell_distance_km(ds.spec(), ca, cb), "km", 1.0);
}

// Template 33: difference of the regional maxima.
AnswerSpec o33(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const std::size_t s = future_step(b, ds);
  const std::string var = get_string(b, "variable");
  const double ma = stat_of("max", region_values(ds, var, cells_named(*cat.geo, get_string(b, "region_a")), s, s + 1));
  const double mb = stat_of("max", region_values(ds, var, cells_named(*cat.geo, get_string(b, "region_b")), s, s + 1));
  return numeric(ma - mb, ds.units(var), cat.stats.sigma(var));
}

// Template 44: counterfactual response to a Gaussian perturbation.
AnswerSpec o44(const json& b, const catalog::Catalog& cat, const BenchConfig& cfg) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const std::string var = get_string(b, "variable");
  const auto initial = ds.slice_time(w.t0, w.t1);
  models::SimConfig sc;
  sc.total_hours = static_cast<int>(get_size(b, "hours"));
  sc.param_alpha = cfg.sim_alpha;
  const models::GaussianPerturbation p{var, get_double(b, "center_lat"), get_double(b, "center_lon"),
                                       get_double(b, "sigma_deg"), get_double(b, "amplitude")};
  const auto sim = models::make_simulator(cfg.simulator);
  const double d = models::counterfactual_delta(*sim, initial, sc, p, var, get_double(b, "probe_lat"),
                                                get_double(b, "probe_lon"), sc.total_hours);
  return numeric(d, ds.units(var), cat.stats.sigma(var));
}

// Template 45: the simulator setting behind a published change summary.
AnswerSpec o45(const json& b, const catalog::Catalog&, const BenchConfig&) {
  const double alpha = get_double(b, "alpha");
  if (alpha < 0.0 || alpha > 1.0) throw Error("bad_bindings", "alpha outside [0, 1]");
  return numeric(alpha, "", 1.0);
}

// Template 46: truth of a claim on its 24 h slice.
AnswerSpec o46(const json& b, const catalog::Catalog& cat, const BenchConfig&) {
  const auto& ds = cat.primary_dataset();
  const Window w = window(b, ds);
  const ClaimCheck check{get_string(b, "variable"), get_string(b, "region"), get_string(b, "stat"),
                         get_string(b, "comparison"), get_double(b, "threshold")};
  const bool holds = evaluate_check(check, ds.slice_time(w.t0, w.t1), *cat.geo);
  return boolean(b.value("negated", false) ? !holds : holds);
}

}  // namespace

const Oracle& oracle_lookup(int template_id) {
  static const std::map<int, Oracle> table = {
      {1, o1},   {2, o2},   {3, o3},   {4, o4},   {5, o5},   {6, o6},   {7, o7},   {10, o10}, {12, o12},
      {16, o16}, {22, o22}, {27, o27}, {30, o30}, {33, o33}, {44, o44}, {45, o45}, {46, o46}};
  auto it = table.find(template_id);
  if (it == table.end()) throw Error("unknown_template", "no oracle for template " + std::to_string(template_id));
  return it->second;
}

bool evaluate_check(const ClaimCheck& check, const grid::GridDataset& ds, const geo::GeoIndex& index) {
  const auto& feature = geo::geocode(index, check.region);
  const auto xs = region_values(ds, grid::lookup_variable(check.variable).name, index.cells_of(feature.id), 0,
                                ds.n_times());
  const double v = stat_of(check.stat, xs);
  if (check.comparison == "above") return v > check.threshold;
  if (check.comparison == "below") return v < check.threshold;
  throw Error("bad_claim", "comparison must be above or below, got '" + check.comparison + "'");
}

}  // namespace stratus::bench
