#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "internal.hpp"

namespace stratus::plan {

const char* to_string(ToolKind kind) {
  switch (kind) {
    case ToolKind::geolocator: return "geolocator";
    case ToolKind::forecaster: return "forecaster";
    case ToolKind::simulator: return "simulator";
    case ToolKind::dataset: return "dataset";
  }
  return "unknown";
}

namespace {

using detail::Context;
using detail::number;
using detail::raise;
using Args = std::vector<Value>;
using FieldPtr = std::shared_ptr<const FieldData>;
using MaskPtr = std::shared_ptr<const MaskData>;
using ListPtr = std::shared_ptr<const List>;

// ---------------------------------------------------------------------------
// Argument helpers

std::int64_t integer(const Value& v, Position pos, const std::string& what) {
  if (v.is<std::int64_t>()) return v.as<std::int64_t>();
  raise("type_error", what + " expects an integer, got " + v.type_name(), pos);
}

const std::string& text(const Value& v, Position pos, const std::string& what) {
  if (v.is<std::string>()) return v.as<std::string>();
  raise("type_error", what + " expects text, got " + v.type_name(), pos);
}

const List& list(const Value& v, Position pos, const std::string& what) {
  if (v.is<ListPtr>()) return *v.as<ListPtr>();
  raise("type_error", what + " expects a list, got " + v.type_name(), pos);
}

const FieldData& field(const Value& v, Position pos, const std::string& what) {
  if (v.is<FieldPtr>()) return *v.as<FieldPtr>();
  raise("type_error", what + " expects a field, got " + v.type_name(), pos);
}

LatLon latlon(const Value& v, Position pos, const std::string& what) {
  if (v.is<LatLon>()) return v.as<LatLon>();
  raise("type_error", what + " expects a point, got " + v.type_name(), pos);
}

double hours_arg(const Value& v, Position pos, const std::string& what) {
  if (v.is<Hours>()) return v.as<Hours>().value;
  if (v.is<std::int64_t>()) return static_cast<double>(v.as<std::int64_t>());
  raise("type_error", what + " expects hours, got " + v.type_name(), pos);
}

int whole_hours(const Value& v, Position pos, const std::string& what) {
  const double h = hours_arg(v, pos, what);
  if (h != std::floor(h) || std::abs(h) > 1e6) raise("value_error", what + " expects whole hours", pos);
  return static_cast<int>(h);
}

const grid::GridDataset& default_dataset(Context& ctx, Position pos) {
  if (ctx.env.datasets.empty() || !ctx.env.datasets.front())
    raise("tool_error", "no dataset is attached to this execution", pos);
  return *ctx.env.datasets.front();
}

const geo::GeoIndex& geolocator(Context& ctx, Position pos) {
  if (!ctx.env.geolocator) raise("tool_error", "no geolocator is attached to this execution", pos);
  return *ctx.env.geolocator;
}

std::string canonical_variable(const grid::GridDataset& ds, const std::string& name, Position pos) {
  if (!ds.has_variable(name)) raise("tool_error", "dataset has no variable '" + name + "'", pos);
  for (const auto& info : grid::variable_registry())
    if (info.name == name || info.alias == name) return info.name;
  return name;
}

FeatureRef ref_of(const geo::GeoFeature& f) { return {f.id, f.name}; }

std::shared_ptr<const grid::GridSpec> shared_spec(const grid::GridSpec& spec) {
  return std::make_shared<const grid::GridSpec>(spec);
}

// ---------------------------------------------------------------------------
// Regions

void check_same_grid(const grid::GridSpec& a, const grid::GridSpec& b, Position pos) {
  if (!(a == b)) raise("tool_error", "geolocator and dataset grids differ", pos);
}

void collect_cells(Context& ctx, const Value& v, const grid::GridSpec& spec, std::vector<std::size_t>& out,
                   std::vector<std::string>& labels, Position pos) {
  if (v.is<MaskPtr>()) {
    const auto& m = *v.as<MaskPtr>();
    if (m.spec) check_same_grid(*m.spec, spec, pos);
    out.insert(out.end(), m.cells.begin(), m.cells.end());
    labels.push_back(m.label);
  } else if (v.is<LatLon>()) {
    const LatLon p = v.as<LatLon>();
    out.push_back(spec.cell(spec.nearest_lat(p.lat), spec.nearest_lon(p.lon)));
    labels.push_back(format_value(v));
  } else if (v.is<FeatureRef>() || v.is<std::string>()) {
    const geo::GeoIndex& index = geolocator(ctx, pos);
    check_same_grid(index.spec(), spec, pos);
    const std::string id = v.is<FeatureRef>() ? v.as<FeatureRef>().id
                                              : geo::geocode(index, v.as<std::string>()).id;
    const auto& cells = index.cells_of(id);
    out.insert(out.end(), cells.begin(), cells.end());
    labels.push_back(index.feature(id).name);
  } else if (v.is<ListPtr>()) {
    for (const auto& item : *v.as<ListPtr>()) collect_cells(ctx, item, spec, out, labels, pos);
  } else {
    raise("type_error", std::string("expected a region (mask, feature, name or point), got ") + v.type_name(),
          pos);
  }
}

MaskData region(Context& ctx, const Value& v, const grid::GridSpec& spec, Position pos) {
  std::vector<std::size_t> cells;
  std::vector<std::string> labels;
  collect_cells(ctx, v, spec, cells, labels, pos);
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  ctx.charge_elements(cells.size(), pos);
  if (cells.empty()) raise("value_error", "region covers no grid cell", pos);
  std::string label;
  for (std::size_t k = 0; k < labels.size(); ++k) label += (k ? " + " : "") + labels[k];
  return {label, shared_spec(spec), std::move(cells)};
}

const grid::GridSpec& region_spec(Context& ctx, Position pos) {
  if (ctx.env.geolocator) return ctx.env.geolocator->spec();
  return default_dataset(ctx, pos).spec();
}

// ---------------------------------------------------------------------------
// Fields

FieldPtr select(Context& ctx, const grid::GridDataset& ds, const std::string& var, const Value* where,
                Position pos) {
  const std::string name = canonical_variable(ds, var, pos);
  auto f = std::make_shared<FieldData>();
  f->variable = name;
  f->units = ds.units(name);
  f->spec = shared_spec(ds.spec());
  f->start_epoch_s = ds.start_epoch_s();
  f->n_times = ds.n_times();
  std::vector<std::size_t> cells;
  if (where) {
    cells = region(ctx, *where, ds.spec(), pos).cells;
  } else {
    cells.resize(ds.spec().n_cells());
    std::iota(cells.begin(), cells.end(), std::size_t{0});
  }
  ctx.charge_elements(cells.size() * f->n_times, pos);
  f->cells.assign(cells.begin(), cells.end());
  f->values.resize(f->n_times * cells.size());
  for (std::size_t t = 0; t < f->n_times; ++t) {
    const auto slice = ds.slice(name, t);
    for (std::size_t k = 0; k < cells.size(); ++k) f->values[t * cells.size() + k] = slice[cells[k]];
  }
  return f;
}

bool space_reduced(const FieldData& f) { return f.cells.size() == 1 && f.cells[0] < 0; }

FieldPtr time_window(Context& ctx, const FieldData& f, std::int64_t t0, std::int64_t t1, Position pos) {
  if (t0 < 0 || t1 <= t0 || static_cast<std::size_t>(t1) > f.n_times)
    raise("value_error", "time window [" + std::to_string(t0) + ", " + std::to_string(t1) +
                             ") outside 0.." + std::to_string(f.n_times), pos);
  auto out = std::make_shared<FieldData>();
  out->variable = f.variable;
  out->units = f.units;
  out->spec = f.spec;
  const int step = f.spec ? f.spec->step_hours : 6;
  out->start_epoch_s = f.start_epoch_s + t0 * step * 3600;
  out->n_times = static_cast<std::size_t>(t1 - t0);
  out->cells = f.cells;
  const std::size_t C = f.cells.size();
  ctx.charge_elements(out->n_times * C, pos);
  out->values.assign(f.values.begin() + static_cast<std::ptrdiff_t>(t0 * C),
                     f.values.begin() + static_cast<std::ptrdiff_t>(t1 * C));
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

enum class Red { mean, min, max, median, sum };

double reduce(std::vector<double> xs, Red r) {
  switch (r) {
    case Red::mean: return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    case Red::sum: return std::accumulate(xs.begin(), xs.end(), 0.0);
    case Red::min: return *std::min_element(xs.begin(), xs.end());
    case Red::max: return *std::max_element(xs.begin(), xs.end());
    case Red::median: {
      std::sort(xs.begin(), xs.end());
      const std::size_t n = xs.size();
      return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
    }
  }
  return 0.0;
}

double quantile_of(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct Numbers {
  std::vector<double> values;
  bool all_int = true;
  bool all_hours = true;
  std::string units;
};

Numbers numbers_of(const List& items, Position pos, const std::string& what) {
  Numbers n;
  bool first = true;
  for (const auto& v : items) {
    n.values.push_back(number(v, pos, what));
    n.all_int = n.all_int && v.is<std::int64_t>();
    n.all_hours = n.all_hours && v.is<Hours>();
    const std::string u = v.is<Real>() ? v.as<Real>().units : "";
    if (first) n.units = u;
    else if (u != n.units && !v.is<Hours>())
      raise("type_error", what + " over values with different units '" + n.units + "' and '" + u + "'", pos);
    first = false;
  }
  if (n.values.empty()) raise("value_error", what + " of an empty list", pos);
  return n;
}

Value reduction(Context& ctx, const Args& a, Position pos, Red r, const char* what) {
  if (a[0].is<ListPtr>()) {
    if (a.size() > 1) raise("type_error", std::string(what) + " over a list takes no axis", pos);
    const List& items = *a[0].as<ListPtr>();
    ctx.charge_elements(items.size(), pos);
    Numbers n = numbers_of(items, pos, what);
    const double v = reduce(n.values, r);
    if (n.all_int && (r == Red::min || r == Red::max)) return static_cast<std::int64_t>(v);
    if (n.all_int && r == Red::sum) {
      std::int64_t s = 0;
      for (const auto& item : items)
        if (__builtin_add_overflow(s, item.as<std::int64_t>(), &s))
          raise("arithmetic_error", "integer overflow in sum", pos);
      return s;
    }
    if (n.all_hours) return Hours{v};
    return Real{v, n.units};
  }
  const FieldData& f = field(a[0], pos, what);
  ctx.charge_elements(f.values.size(), pos);
  if (f.values.empty()) raise("value_error", std::string(what) + " of an empty field", pos);
  if (a.size() == 1) return Real{reduce(f.values, r), f.units};
  const std::string& axis = text(a[1], pos, what);
  const std::size_t T = f.n_times, C = f.cells.size();
  auto out = std::make_shared<FieldData>();
  out->variable = f.variable;
  out->units = f.units;
  out->spec = f.spec;
  out->start_epoch_s = f.start_epoch_s;
  if (axis == "time") {
    out->n_times = 1;
    out->cells = f.cells;
    std::vector<double> column(T);
    for (std::size_t k = 0; k < C; ++k) {
      for (std::size_t t = 0; t < T; ++t) column[t] = f.at(t, k);
      out->values.push_back(reduce(column, r));
    }
  } else if (axis == "space") {
    out->n_times = T;
    out->cells = {-1};
    for (std::size_t t = 0; t < T; ++t)
      out->values.push_back(reduce({f.values.begin() + static_cast<std::ptrdiff_t>(t * C),
                                    f.values.begin() + static_cast<std::ptrdiff_t>((t + 1) * C)},
                                   r));
  } else {
    raise("value_error", "unknown axis '" + axis + "'; expected \"time\" or \"space\"", pos);
  }
  return FieldPtr(std::move(out));
}

std::size_t arg_extreme(const std::vector<double>& xs, bool want_max) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < xs.size(); ++k)
    if (want_max ? xs[k] > xs[best] : xs[k] < xs[best]) best = k;
  return best;
}

std::vector<double> space_means(const FieldData& f) {
  std::vector<double> out(f.n_times);
  const std::size_t C = f.cells.size();
  for (std::size_t t = 0; t < f.n_times; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < C; ++k) s += f.at(t, k);
    out[t] = s / static_cast<double>(C);
  }
  return out;
}

std::vector<double> time_means(const FieldData& f) {
  const std::size_t C = f.cells.size();
  std::vector<double> out(C, 0.0);
  for (std::size_t t = 0; t < f.n_times; ++t)
    for (std::size_t k = 0; k < C; ++k) out[k] += f.at(t, k);
  for (double& v : out) v /= static_cast<double>(f.n_times);
  return out;
}

LatLon cell_point(const FieldData& f, std::size_t k, Position pos) {
  if (space_reduced(f) || !f.spec) raise("type_error", "field has no cell locations", pos);
  const auto cell = static_cast<std::size_t>(f.cells[k]);
  const std::size_t nlon = f.spec->n_lon();
  return {f.spec->lat_points[cell / nlon], f.spec->lon_points[cell % nlon]};
}

Value b_argmax_time(Context& ctx, const Args& a, Position pos, bool want_max) {
  const FieldData& f = field(a[0], pos, want_max ? "argmax_time" : "argmin_time");
  ctx.charge_elements(f.values.size(), pos);
  if (f.values.empty()) raise("value_error", "empty field", pos);
  return static_cast<std::int64_t>(arg_extreme(space_means(f), want_max));
}

Value b_argmax_cell(Context& ctx, const Args& a, Position pos, bool want_max) {
  const FieldData& f = field(a[0], pos, want_max ? "argmax_cell" : "argmin_cell");
  ctx.charge_elements(f.values.size(), pos);
  if (f.values.empty()) raise("value_error", "empty field", pos);
  return cell_point(f, arg_extreme(time_means(f), want_max), pos);
}

Value b_argmax(Context& ctx, const Args& a, Position pos, bool want_max) {
  const char* what = want_max ? "argmax" : "argmin";
  if (a[0].is<ListPtr>()) {
    const List& items = *a[0].as<ListPtr>();
    ctx.charge_elements(items.size(), pos);
    return static_cast<std::int64_t>(arg_extreme(numbers_of(items, pos, what).values, want_max));
  }
  const FieldData& f = field(a[0], pos, what);
  if (f.cells.size() == 1) return b_argmax_time(ctx, a, pos, want_max);
  if (f.n_times == 1) return b_argmax_cell(ctx, a, pos, want_max);
  raise("type_error", std::string(what) + " needs a single-cell or single-step field; use " + what +
                          "_time or " + what + "_cell", pos);
}

// ---------------------------------------------------------------------------
// Builtin bodies

Value b_range(Context& ctx, const Args& a, Position pos) {
  const std::int64_t n = integer(a[0], pos, "range");
  if (n < 0) raise("value_error", "range expects a non-negative count", pos);
  ctx.charge(static_cast<std::uint64_t>(n), pos);
  List out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) out.emplace_back(k);
  return Value::list(std::move(out));
}

Value b_len(Context&, const Args& a, Position pos) {
  if (a[0].is<std::string>()) return static_cast<std::int64_t>(a[0].as<std::string>().size());
  return static_cast<std::int64_t>(list(a[0], pos, "len").size());
}

Value b_nth(Context&, const Args& a, Position pos) {
  const List& items = list(a[0], pos, "nth");
  std::int64_t i = integer(a[1], pos, "nth");
  const auto n = static_cast<std::int64_t>(items.size());
  if (i < 0) i += n;
  if (i < 0 || i >= n) raise("value_error", "index " + std::to_string(i) + " out of range for length " +
                                               std::to_string(n), pos);
  return items[static_cast<std::size_t>(i)];
}

Value b_abs(Context& ctx, const Args& a, Position pos) {
  const Value& v = a[0];
  if (v.is<std::int64_t>()) {
    if (v.as<std::int64_t>() == std::numeric_limits<std::int64_t>::min())
      raise("arithmetic_error", "integer overflow in abs", pos);
    return std::abs(v.as<std::int64_t>());
  }
  if (v.is<Real>()) return Real{std::abs(v.as<Real>().value), v.as<Real>().units};
  if (v.is<Hours>()) return Hours{std::abs(v.as<Hours>().value)};
  const FieldData& f = field(v, pos, "abs");
  ctx.charge_elements(f.values.size(), pos);
  auto out = std::make_shared<FieldData>(f);
  for (double& x : out->values) x = std::abs(x);
  return FieldPtr(std::move(out));
}

Value b_round(Context&, const Args& a, Position pos) {
  const std::int64_t digits = a.size() > 1 ? integer(a[1], pos, "round") : 0;
  if (digits < 0 || digits > 12) raise("value_error", "round digits must be within 0..12", pos);
  if (a[0].is<std::int64_t>()) return a[0];
  const double scale = std::pow(10.0, static_cast<double>(digits));
  auto r = [&](double x) { return std::round(x * scale) / scale; };
  if (a[0].is<Hours>()) return Hours{r(a[0].as<Hours>().value)};
  if (a[0].is<Real>()) return Real{r(a[0].as<Real>().value), a[0].as<Real>().units};
  raise("type_error", std::string("round expects a number, got ") + a[0].type_name(), pos);
}

Value b_print(Context& ctx, const Args& a, Position) {
  ctx.out += format_value(a[0]);
  ctx.out += "\n";
  return a[0];
}

Value b_sleep(Context& ctx, const Args& a, Position pos) {
  const std::int64_t ms = integer(a[0], pos, "sleep");
  if (ms < 0) raise("value_error", "sleep expects a non-negative duration", pos);
  const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
  while (std::chrono::steady_clock::now() < until) {
    ctx.check_clock(pos);
    const auto left = until - std::chrono::steady_clock::now();
    std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(left, std::chrono::milliseconds(5)));
  }
  return ms;
}

Value b_point(Context&, const Args& a, Position pos) {
  const double lat = number(a[0], pos, "point"), lon = number(a[1], pos, "point");
  if (lat < -90.0 || lat > 90.0) raise("value_error", "latitude must be within [-90, 90]", pos);
  if (!std::isfinite(lon)) raise("value_error", "longitude must be finite", pos);
  return LatLon{lat, lon};
}

Value b_lat(Context&, const Args& a, Position pos) { return Real{latlon(a[0], pos, "lat").lat, "deg"}; }
Value b_lon(Context&, const Args& a, Position pos) { return Real{latlon(a[0], pos, "lon").lon, "deg"}; }

Value b_hours(Context&, const Args& a, Position pos) {
  if (a[0].is<Real>() && !a[0].as<Real>().units.empty())
    raise("type_error", "hours expects a plain number", pos);
  return Hours{number(a[0], pos, "hours")};
}

Value b_time_offset_hours(Context& ctx, const Args& a, Position pos) {
  const std::int64_t idx = integer(a[0], pos, "time_offset_hours");
  const int step = ctx.env.datasets.empty() || !ctx.env.datasets.front()
                       ? 6
                       : ctx.env.datasets.front()->spec().step_hours;
  return Hours{grid::time_offset_hours(idx, step)};
}

Value b_name(Context&, const Args& a, Position pos) {
  if (a[0].is<FeatureRef>()) return a[0].as<FeatureRef>().name;
  if (a[0].is<std::string>()) return a[0];
  List out;
  for (const auto& item : list(a[0], pos, "name")) {
    if (!item.is<FeatureRef>()) raise("type_error", std::string("name expects features, got ") + item.type_name(), pos);
    out.emplace_back(item.as<FeatureRef>().name);
  }
  return Value::list(std::move(out));
}

Value b_quantile(Context& ctx, const Args& a, Position pos) {
  const double q = number(a[1], pos, "quantile");
  if (q < 0.0 || q > 1.0) raise("value_error", "quantile level must be within [0, 1]", pos);
  if (a[0].is<ListPtr>()) {
    const List& items = *a[0].as<ListPtr>();
    ctx.charge_elements(items.size(), pos);
    Numbers n = numbers_of(items, pos, "quantile");
    const double v = quantile_of(n.values, q);
    if (n.all_hours) return Hours{v};
    return Real{v, n.units};
  }
  const FieldData& f = field(a[0], pos, "quantile");
  ctx.charge_elements(f.values.size(), pos);
  if (f.values.empty()) raise("value_error", "quantile of an empty field", pos);
  return Real{quantile_of(f.values, q), f.units};
}

Value b_count(Context& ctx, const Args& a, Position pos) {
  if (a[0].is<ListPtr>()) return static_cast<std::int64_t>(a[0].as<ListPtr>()->size());
  if (a[0].is<MaskPtr>()) return static_cast<std::int64_t>(a[0].as<MaskPtr>()->cells.size());
  const FieldData& f = field(a[0], pos, "count");
  ctx.charge_elements(f.values.size(), pos);
  return static_cast<std::int64_t>(std::count_if(f.values.begin(), f.values.end(), [](double v) { return v != 0.0; }));
}

Value b_area(Context& ctx, const Args& a, Position pos) {
  std::vector<std::size_t> cells;
  std::shared_ptr<const grid::GridSpec> spec;
  if (a[0].is<MaskPtr>()) {
    cells = a[0].as<MaskPtr>()->cells;
    spec = a[0].as<MaskPtr>()->spec;
  } else {
    const FieldData& f = field(a[0], pos, "area");
    if (f.n_times != 1) raise("type_error", "area needs a single-step field; use at() or window() first", pos);
    if (space_reduced(f)) raise("type_error", "area needs cell locations", pos);
    for (std::size_t k = 0; k < f.cells.size(); ++k)
      if (f.values[k] != 0.0) cells.push_back(static_cast<std::size_t>(f.cells[k]));
    spec = f.spec;
  }
  if (!spec) raise("type_error", "area needs grid geometry", pos);
  ctx.charge_elements(cells.size(), pos);
  double km2 = 0.0;
  for (std::size_t c : cells) km2 += grid::cell_area_km2(*spec, c / spec->n_lon());
  return Real{km2, "km2"};
}

Value b_data(Context& ctx, const Args& a, Position pos) {
  const std::int64_t k = a.empty() ? 0 : integer(a[0], pos, "data");
  if (k < 0 || static_cast<std::size_t>(k) >= ctx.env.datasets.size())
    raise("tool_error", "no attached dataset with index " + std::to_string(k), pos);
  return ctx.env.datasets[static_cast<std::size_t>(k)];
}

const grid::GridDataset& dataset_arg(Context& ctx, const Args& a, std::size_t& next, Position pos) {
  if (!a.empty() && a[0].is<grid::DatasetPtr>()) {
    next = 1;
    return *a[0].as<grid::DatasetPtr>();
  }
  next = 0;
  return default_dataset(ctx, pos);
}

Value b_variables(Context& ctx, const Args& a, Position pos) {
  std::size_t next;
  const grid::GridDataset& ds = dataset_arg(ctx, a, next, pos);
  if (next != a.size()) raise("type_error", "variables expects an optional dataset", pos);
  List out;
  for (const auto& n : ds.variable_names()) out.emplace_back(n);
  return Value::list(std::move(out));
}

Value b_sel(Context& ctx, const Args& a, Position pos) {
  std::size_t next;
  const grid::GridDataset& ds = dataset_arg(ctx, a, next, pos);
  if (next >= a.size()) raise("type_error", "sel expects a variable name", pos);
  if (a.size() - next > 2) raise("arity_mismatch", "sel takes a variable and an optional region", pos);
  const std::string& var = text(a[next], pos, "sel");
  return select(ctx, ds, var, a.size() - next == 2 ? &a[next + 1] : nullptr, pos);
}

Value b_window(Context& ctx, const Args& a, Position pos) {
  const std::int64_t t0 = integer(a[1], pos, "window"), t1 = integer(a[2], pos, "window");
  if (a[0].is<grid::DatasetPtr>()) {
    const auto& ds = *a[0].as<grid::DatasetPtr>();
    if (t0 < 0 || t1 <= t0 || static_cast<std::size_t>(t1) > ds.n_times())
      raise("value_error", "time window outside the dataset", pos);
    return grid::DatasetPtr(std::make_shared<const grid::GridDataset>(
        ds.slice_time(static_cast<std::size_t>(t0), static_cast<std::size_t>(t1))));
  }
  return time_window(ctx, field(a[0], pos, "window"), t0, t1, pos);
}

Value b_at(Context& ctx, const Args& a, Position pos) {
  const std::int64_t t = integer(a[1], pos, "at");
  if (a[0].is<ListPtr>()) return b_nth(ctx, a, pos);
  if (a[0].is<grid::DatasetPtr>()) return b_window(ctx, {a[0], a[1], Value(t + 1)}, pos);
  return time_window(ctx, field(a[0], pos, "at"), t, t + 1, pos);
}

Value b_apply(Context& ctx, const Args& a, Position pos) {
  const FieldData& f = field(a[0], pos, "apply");
  if (space_reduced(f) || !f.spec) raise("type_error", "apply needs a field with cell locations", pos);
  const MaskData m = region(ctx, a[1], *f.spec, pos);
  auto out = std::make_shared<FieldData>();
  out->variable = f.variable;
  out->units = f.units;
  out->spec = f.spec;
  out->start_epoch_s = f.start_epoch_s;
  out->n_times = f.n_times;
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < f.cells.size(); ++k)
    if (std::binary_search(m.cells.begin(), m.cells.end(), static_cast<std::size_t>(f.cells[k]))) {
      keep.push_back(k);
      out->cells.push_back(f.cells[k]);
    }
  if (keep.empty()) raise("value_error", "region does not overlap the field", pos);
  ctx.charge_elements(keep.size() * f.n_times, pos);
  for (std::size_t t = 0; t < f.n_times; ++t)
    for (std::size_t k : keep) out->values.push_back(f.at(t, k));
  return FieldPtr(std::move(out));
}

Value b_n_steps(Context&, const Args& a, Position pos) {
  if (a[0].is<grid::DatasetPtr>()) return static_cast<std::int64_t>(a[0].as<grid::DatasetPtr>()->n_times());
  return static_cast<std::int64_t>(field(a[0], pos, "n_steps").n_times);
}

Value b_timestamp(Context&, const Args& a, Position pos) {
  const std::int64_t t = integer(a[1], pos, "timestamp");
  std::int64_t start;
  int step;
  std::size_t n;
  if (a[0].is<grid::DatasetPtr>()) {
    const auto& ds = *a[0].as<grid::DatasetPtr>();
    start = ds.start_epoch_s();
    step = ds.spec().step_hours;
    n = ds.n_times();
  } else {
    const FieldData& f = field(a[0], pos, "timestamp");
    start = f.start_epoch_s;
    step = f.spec ? f.spec->step_hours : 6;
    n = f.n_times;
  }
  if (t < 0 || static_cast<std::size_t>(t) >= n) raise("value_error", "time index out of range", pos);
  return grid::format_iso8601(start + t * step * 3600);
}

Value b_geocode(Context& ctx, const Args& a, Position pos) {
  return ref_of(geo::geocode(geolocator(ctx, pos), text(a[0], pos, "geocode")));
}

Value b_reverse_geocode(Context& ctx, const Args& a, Position pos) {
  LatLon p;
  if (a.size() == 2) p = {number(a[0], pos, "reverse_geocode"), number(a[1], pos, "reverse_geocode")};
  else p = latlon(a[0], pos, "reverse_geocode");
  List out;
  for (const auto* f : geo::reverse_geocode(geolocator(ctx, pos), p.lat, p.lon)) out.emplace_back(ref_of(*f));
  return Value::list(std::move(out));
}

Value b_mask(Context& ctx, const Args& a, Position pos) {
  return MaskPtr(std::make_shared<const MaskData>(region(ctx, a[0], region_spec(ctx, pos), pos)));
}

Value b_region_distribution(Context& ctx, const Args& a, Position pos) {
  const geo::GeoIndex& index = geolocator(ctx, pos);
  const MaskData m = region(ctx, a[0], index.spec(), pos);
  const auto& w = index.weights();
  auto out = std::make_shared<FieldData>();
  out->variable = "mass";
  out->spec = m.spec;
  out->n_times = 1;
  double total = 0.0;
  for (std::size_t c : m.cells) total += w.values[c];
  for (std::size_t c : m.cells) {
    out->cells.push_back(static_cast<std::int64_t>(c));
    out->values.push_back(w.values[c] / total);
  }
  return FieldPtr(std::move(out));
}

Value b_sublocations(Context& ctx, const Args& a, Position pos) {
  const geo::GeoIndex& index = geolocator(ctx, pos);
  const std::string id = a[0].is<FeatureRef>() ? a[0].as<FeatureRef>().id
                                               : geo::geocode(index, text(a[0], pos, "sublocations")).id;
  List out;
  for (const auto* f : geo::sublocations(index, id)) out.emplace_back(ref_of(*f));
  return Value::list(std::move(out));
}

Value b_features(Context& ctx, const Args& a, Position pos) {
  const geo::GeoIndex& index = geolocator(ctx, pos);
  const std::string& kind = text(a[0], pos, "features");
  const bool all = kind == "all";
  const geo::FeatureKind k = all ? geo::FeatureKind::other : geo::parse_kind(kind);
  std::vector<const geo::GeoFeature*> hits;
  for (const auto& f : index.features())
    if (all || f.kind == k) hits.push_back(&f);
  std::sort(hits.begin(), hits.end(), [](auto* x, auto* y) { return x->name < y->name; });
  List out;
  for (const auto* f : hits) out.emplace_back(ref_of(*f));
  return Value::list(std::move(out));
}

Value b_geodesic_km(Context&, const Args& a, Position pos) {
  LatLon p, q;
  if (a.size() == 2) {
    p = latlon(a[0], pos, "geodesic_km");
    q = latlon(a[1], pos, "geodesic_km");
  } else if (a.size() == 4) {
    p = {number(a[0], pos, "geodesic_km"), number(a[1], pos, "geodesic_km")};
    q = {number(a[2], pos, "geodesic_km"), number(a[3], pos, "geodesic_km")};
  } else {
    raise("arity_mismatch", "geodesic_km takes two points or four coordinates", pos);
  }
  return Real{geo::geodesic_km(p.lat, p.lon, q.lat, q.lon), "km"};
}

Value b_region_stat(Context& ctx, const Args& a, Position pos) {
  const List& regions = list(a[0], pos, "region_stat");
  const std::string& how = text(a[2], pos, "region_stat");
  static const std::map<std::string, Red> kinds = {
      {"mean", Red::mean}, {"min", Red::min}, {"max", Red::max}, {"median", Red::median}, {"sum", Red::sum}};
  auto it = kinds.find(how);
  if (it == kinds.end()) raise("value_error", "unknown reduction '" + how + "'", pos);
  Value source = a[1];
  if (source.is<std::string>()) source = select(ctx, default_dataset(ctx, pos), source.as<std::string>(), nullptr, pos);
  List out;
  for (const auto& r : regions) {
    const Value sub = b_apply(ctx, {source, r}, pos);
    out.push_back(reduction(ctx, {sub}, pos, it->second, "region_stat"));
  }
  return Value::list(std::move(out));
}

Value b_forecast(Context& ctx, const Args& a, Position pos) {
  if (!ctx.env.forecaster) raise("tool_error", "no forecaster is attached to this execution", pos);
  std::size_t next;
  const grid::GridDataset& ds = dataset_arg(ctx, a, next, pos);
  if (a.size() - next != 1) raise("arity_mismatch", "forecast takes an optional dataset and a horizon", pos);
  models::ForecastRequest req{ds, whole_hours(a[next], pos, "forecast"), ds.variable_names()};
  return grid::DatasetPtr(std::make_shared<const grid::GridDataset>(ctx.env.forecaster->forecast(req)));
}

Value b_simulate(Context& ctx, const Args& a, Position pos) {
  if (!ctx.env.simulator) raise("tool_error", "no simulator is attached to this execution", pos);
  std::size_t next;
  const grid::GridDataset& ds = dataset_arg(ctx, a, next, pos);
  if (a.size() - next != 2) raise("arity_mismatch", "simulate takes an optional dataset, alpha and hours", pos);
  models::SimConfig cfg;
  cfg.param_alpha = number(a[next], pos, "simulate");
  cfg.total_hours = whole_hours(a[next + 1], pos, "simulate");
  return grid::DatasetPtr(std::make_shared<const grid::GridDataset>(ctx.env.simulator->simulate(ds, cfg)));
}

Value b_counterfactual_delta(Context& ctx, const Args& a, Position pos) {
  if (!ctx.env.simulator) raise("tool_error", "no simulator is attached to this execution", pos);
  const grid::GridDataset& ds = default_dataset(ctx, pos);
  const std::string var = canonical_variable(ds, text(a[0], pos, "counterfactual_delta"), pos);
  const LatLon center = latlon(a[1], pos, "counterfactual_delta");
  models::GaussianPerturbation p{var, center.lat, center.lon, number(a[2], pos, "counterfactual_delta"),
                                 number(a[3], pos, "counterfactual_delta")};
  const LatLon probe = latlon(a[4], pos, "counterfactual_delta");
  const int at_hours = whole_hours(a[5], pos, "counterfactual_delta");
  models::SimConfig cfg;
  cfg.total_hours = at_hours;
  if (a.size() > 6) cfg.param_alpha = number(a[6], pos, "counterfactual_delta");
  const double d = models::counterfactual_delta(*ctx.env.simulator, ds, cfg, p, var, probe.lat, probe.lon, at_hours);
  return Real{d, ds.units(var)};
}

Value b_change_summary(Context& ctx, const Args& a, Position pos) {
  if (!a[0].is<grid::DatasetPtr>())
    raise("type_error", std::string("change_summary expects a dataset, got ") + a[0].type_name(), pos);
  const auto& ds = *a[0].as<grid::DatasetPtr>();
  const std::string var = canonical_variable(ds, text(a[1], pos, "change_summary"), pos);
  const int hours = a.size() > 2 ? whole_hours(a[2], pos, "change_summary") : 24;
  ctx.charge_elements(ds.spec().n_cells(), pos);
  return Real{models::change_summary(ds, var, hours), ds.units(var)};
}

Value b_fit_alpha(Context& ctx, const Args& a, Position pos) {
  if (!ctx.env.simulator) raise("tool_error", "no simulator is attached to this execution", pos);
  const grid::GridDataset& ds = default_dataset(ctx, pos);
  const std::string var = canonical_variable(ds, text(a[0], pos, "fit_alpha"), pos);
  const double target = number(a[1], pos, "fit_alpha");
  const int hours = a.size() > 2 ? whole_hours(a[2], pos, "fit_alpha") : 24;
  return Real{models::estimate_alpha(*ctx.env.simulator, ds, var, target, hours).alpha, ""};
}

// ---------------------------------------------------------------------------
// Table

struct Entry {
  BuiltinInfo info;
  detail::BuiltinFn fn;
};

using TK = ToolKind;

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    auto add = [&](std::string name, int lo, int hi, std::vector<TK> tools, std::string sig, std::string doc,
                   detail::BuiltinFn fn) {
      e.push_back({{std::move(name), lo, hi, std::move(tools), std::move(sig), std::move(doc)}, fn});
    };
    // Reductions
    add("mean", 1, 2, {}, "mean(x, axis?)", "Mean of a list or field. axis \"time\" or \"space\" keeps the other axis.",
        [](Context& c, const Args& a, Position p) { return reduction(c, a, p, Red::mean, "mean"); });
    add("min", 1, 2, {}, "min(x, axis?)", "Minimum, as mean.",
        [](Context& c, const Args& a, Position p) { return reduction(c, a, p, Red::min, "min"); });
    add("max", 1, 2, {}, "max(x, axis?)", "Maximum, as mean.",
        [](Context& c, const Args& a, Position p) { return reduction(c, a, p, Red::max, "max"); });
    add("median", 1, 2, {}, "median(x, axis?)", "Median, as mean.",
        [](Context& c, const Args& a, Position p) { return reduction(c, a, p, Red::median, "median"); });
    add("sum", 1, 2, {}, "sum(x, axis?)", "Sum, as mean.",
        [](Context& c, const Args& a, Position p) { return reduction(c, a, p, Red::sum, "sum"); });
    add("quantile", 2, 2, {}, "quantile(x, q)", "Linear-interpolated quantile over all values, q in [0, 1].",
        b_quantile);
    add("count", 1, 1, {}, "count(x)", "Non-zero values of a field, cells of a mask, or list length.", b_count);
    add("argmax", 1, 1, {}, "argmax(x)",
        "Index of the largest list item; time index for a single-cell field; point for a single-step field.",
        [](Context& c, const Args& a, Position p) { return b_argmax(c, a, p, true); });
    add("argmin", 1, 1, {}, "argmin(x)", "As argmax, for the smallest value.",
        [](Context& c, const Args& a, Position p) { return b_argmax(c, a, p, false); });
    add("argmax_time", 1, 1, {}, "argmax_time(field)",
        "Time index (from the field start) whose spatial mean is largest.",
        [](Context& c, const Args& a, Position p) { return b_argmax_time(c, a, p, true); });
    add("argmin_time", 1, 1, {}, "argmin_time(field)", "As argmax_time, for the smallest mean.",
        [](Context& c, const Args& a, Position p) { return b_argmax_time(c, a, p, false); });
    add("argmax_cell", 1, 1, {}, "argmax_cell(field)", "Point of the cell whose time mean is largest.",
        [](Context& c, const Args& a, Position p) { return b_argmax_cell(c, a, p, true); });
    add("argmin_cell", 1, 1, {}, "argmin_cell(field)", "As argmax_cell, for the smallest mean.",
        [](Context& c, const Args& a, Position p) { return b_argmax_cell(c, a, p, false); });
    add("area", 1, 1, {}, "area(x)", "Area in km2 of a mask, or of the non-zero cells of a single-step field.",
        b_area);
    // Data selection
    add("data", 0, 1, {TK::dataset}, "data(k?)", "The k-th attached dataset (default 0).", b_data);
    add("variables", 0, 1, {TK::dataset}, "variables(ds?)", "Variable names of a dataset.", b_variables);
    add("sel", 1, 3, {TK::dataset}, "sel(ds?, variable, region?)",
        "Field of a variable over all steps, restricted to a region if given.", b_sel);
    add("window", 3, 3, {}, "window(x, t0, t1)", "Steps [t0, t1) of a field or dataset.", b_window);
    add("at", 2, 2, {}, "at(x, t)", "Single step t of a field or dataset; item t of a list.", b_at);
    add("apply", 2, 2, {}, "apply(field, region)", "Restricts a field to the cells of a region.", b_apply);
    add("n_steps", 1, 1, {}, "n_steps(x)", "Number of time steps of a field or dataset.", b_n_steps);
    add("timestamp", 2, 2, {}, "timestamp(x, t)", "ISO-8601 time of step t.", b_timestamp);
    add("time_offset_hours", 1, 1, {}, "time_offset_hours(t)", "Hours from the start for time index t.",
        b_time_offset_hours);
    // Geolocator
    add("geocode", 1, 1, {TK::geolocator}, "geocode(name)", "Feature for a place name (fuzzy).", b_geocode);
    add("reverse_geocode", 1, 2, {TK::geolocator}, "reverse_geocode(point) | reverse_geocode(lat, lon)",
        "Features containing the nearest cell, most specific first.", b_reverse_geocode);
    add("mask", 1, 1, {TK::geolocator}, "mask(region)",
        "Cell mask of a feature, name, point, mask, or list of these.", b_mask);
    add("region_mask", 1, 1, {TK::geolocator}, "region_mask(region)", "Same as mask.", b_mask);
    add("region_distribution", 1, 1, {TK::geolocator}, "region_distribution(region)",
        "Area-weighted probability mass over the region's cells.", b_region_distribution);
    add("sublocations", 1, 1, {TK::geolocator}, "sublocations(feature)", "Features nested inside a feature.",
        b_sublocations);
    add("features", 1, 1, {TK::geolocator}, "features(kind)",
        "All features of a kind (country, continent, ocean, other, all), by name.", b_features);
    add("region_stat", 3, 3, {TK::geolocator, TK::dataset}, "region_stat(regions, field_or_variable, how)",
        "One reduction (mean, min, max, median, sum) per region.", b_region_stat);
    add("geodesic_km", 2, 4, {}, "geodesic_km(p, q) | geodesic_km(lat1, lon1, lat2, lon2)",
        "Great-circle distance in km.", b_geodesic_km);
    // Models
    add("forecast", 1, 2, {TK::forecaster, TK::dataset}, "forecast(ds?, hours)",
        "Forecast steps following the last step of the dataset.", b_forecast);
    add("simulate", 2, 3, {TK::simulator, TK::dataset}, "simulate(ds?, alpha, hours)",
        "Simulation from the last step; step 0 is the start state.", b_simulate);
    add("counterfactual_delta", 6, 7, {TK::simulator, TK::dataset},
        "counterfactual_delta(variable, center, sigma_deg, amplitude, probe, hours, alpha?)",
        "Perturbed minus unperturbed value at the probe after a Gaussian bump at the center.",
        b_counterfactual_delta);
    add("change_summary", 2, 3, {}, "change_summary(sim, variable, hours?)",
        "Mean absolute change of a variable between the start of a simulation and hours later (default 24).",
        b_change_summary);
    add("fit_alpha", 2, 3, {TK::simulator, TK::dataset}, "fit_alpha(variable, target, hours?)",
        "Simulator alpha whose change_summary matches the target.", b_fit_alpha);
    // Utility
    add("range", 1, 1, {}, "range(n)", "List 0..n-1.", b_range);
    add("len", 1, 1, {}, "len(x)", "Length of a list or text.", b_len);
    add("nth", 2, 2, {}, "nth(list, i)", "Item i; negative counts from the end.", b_nth);
    add("abs", 1, 1, {}, "abs(x)", "Absolute value.", b_abs);
    add("round", 1, 2, {}, "round(x, digits?)", "Rounds half away from zero.", b_round);
    add("name", 1, 1, {}, "name(x)", "Name of a feature, or names of a list of features.", b_name);
    add("point", 2, 2, {}, "point(lat, lon)", "A latitude/longitude pair in degrees.", b_point);
    add("latlon", 2, 2, {}, "latlon(lat, lon)", "Same as point.", b_point);
    add("lat", 1, 1, {}, "lat(p)", "Latitude of a point.", b_lat);
    add("lon", 1, 1, {}, "lon(p)", "Longitude of a point.", b_lon);
    add("hours", 1, 1, {}, "hours(x)", "A duration in hours.", b_hours);
    add("print", 1, 1, {}, "print(x)", "Writes x to the captured output and returns it.", b_print);
    add("sleep", 1, 1, {}, "sleep(ms)", "Waits, honouring the wall-clock budget.", b_sleep);
    return e;
  }();
  return entries;
}

const std::map<std::string, std::size_t, std::less<>>& by_name() {
  static const auto index = [] {
    std::map<std::string, std::size_t, std::less<>> m;
    for (std::size_t k = 0; k < table().size(); ++k) m.emplace(table()[k].info.name, k);
    return m;
  }();
  return index;
}

}  // namespace

namespace detail {
BuiltinFn builtin_impl(std::string_view name) {
  auto it = by_name().find(name);
  return it == by_name().end() ? nullptr : table()[it->second].fn;
}
}  // namespace detail

const std::vector<BuiltinInfo>& builtins() {
  static const std::vector<BuiltinInfo> infos = [] {
    std::vector<BuiltinInfo> out;
    for (const auto& e : table()) out.push_back(e.info);
    return out;
  }();
  return infos;
}

const BuiltinInfo* find_builtin(std::string_view name) {
  auto it = by_name().find(name);
  return it == by_name().end() ? nullptr : &builtins()[it->second];
}

std::string builtin_reference() {
  std::string out;
  for (const auto& b : builtins()) {
    out += "- `" + b.signature + "`: " + b.doc;
    if (!b.tools.empty()) {
      out += " (uses";
      for (auto t : b.tools) out += std::string(" ") + to_string(t);
      out += ")";
    }
    out += "\n";
  }
  return out;
}

}  // namespace stratus::plan
