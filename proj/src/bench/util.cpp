#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "internal.hpp"

namespace stratus::bench::detail {

std::size_t Sampler::index(std::size_t n) {
  if (n == 0) throw Error("sampler_exhausted", "nothing to sample from");
  return static_cast<std::size_t>(rng_() % n);
}

double Sampler::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string fmt(double v) {
  if (v == 0.0) v = 0.0;
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double round_sig(double v, int digits) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, digits - 1);
  double out = 0.0;
  std::from_chars(buf, end, out);
  return out;
}

std::vector<const geo::GeoFeature*> features_with_cells(const geo::GeoIndex& index,
                                                        std::optional<geo::FeatureKind> kind) {
  std::vector<const geo::GeoFeature*> out;
  for (const auto& f : index.features())
    if ((!kind || f.kind == *kind) && !index.cells_of(f.id).empty()) out.push_back(&f);
  std::sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
    return a->name != b->name ? a->name < b->name : a->id < b->id;
  });
  return out;
}

const std::vector<std::size_t>& cells_named(const geo::GeoIndex& index, const std::string& name) {
  for (const auto& f : index.features())
    if (f.name == name) return index.cells_of(f.id);
  throw Error("unknown_feature", "no feature named '" + name + "'");
}

std::vector<double> region_values(const grid::GridDataset& ds, const std::string& var,
                                  const std::vector<std::size_t>& cells, std::size_t t0, std::size_t t1) {
  if (cells.empty()) throw Error("empty_region", "region covers no cell");
  std::vector<double> out;
  out.reserve((t1 - t0) * cells.size());
  for (std::size_t t = t0; t < t1; ++t) {
    const auto slice = ds.slice(var, t);
    for (std::size_t c : cells) out.push_back(slice[c]);
  }
  return out;
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double quantile_of(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

std::vector<double> spatial_means(const grid::GridDataset& ds, const std::string& var,
                                  const std::vector<std::size_t>& cells, std::size_t t0, std::size_t t1) {
  std::vector<double> out;
  for (std::size_t t = t0; t < t1; ++t) {
    const auto slice = ds.slice(var, t);
    double s = 0.0;
    for (std::size_t c : cells) s += slice[c];
    out.push_back(s / static_cast<double>(cells.size()));
  }
  return out;
}

std::size_t arg_extreme(const std::vector<double>& xs, bool want_max) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < xs.size(); ++k)
    if (want_max ? xs[k] > xs[best] : xs[k] < xs[best]) best = k;
  return best;
}

std::string var_text(const std::string& var) {
  const auto& info = grid::lookup_variable(var);
  return info.description + " (" + info.name + ")";
}

std::size_t steps_of(int hours, const grid::GridSpec& spec) {
  return static_cast<std::size_t>(hours / spec.step_hours);
}

std::size_t get_size(const nlohmann::json& b, const char* key) {
  if (!b.contains(key) || !b[key].is_number_integer() || b[key].get<std::int64_t>() < 0)
    throw Error("bad_bindings", std::string("binding '") + key + "' missing or not a count");
  return static_cast<std::size_t>(b[key].get<std::int64_t>());
}

double get_double(const nlohmann::json& b, const char* key) {
  if (!b.contains(key) || !b[key].is_number()) throw Error("bad_bindings", std::string("binding '") + key + "' missing");
  return b[key].get<double>();
}

std::string get_string(const nlohmann::json& b, const char* key) {
  if (!b.contains(key) || !b[key].is_string()) throw Error("bad_bindings", std::string("binding '") + key + "' missing");
  return b[key].get<std::string>();
}

AnswerSpec numeric(double value, const std::string& units, double sigma) {
  AnswerSpec a;
  a.kind = eval::AnswerKind::numeric;
  a.value = value;
  a.units = units;
  a.sigma = sigma;
  return a;
}

AnswerSpec hours_answer(double hours) {
  AnswerSpec a;
  a.kind = eval::AnswerKind::hours;
  a.value = hours;
  return a;
}

AnswerSpec location(const std::string& name) {
  AnswerSpec a;
  a.kind = eval::AnswerKind::location;
  a.name = name;
  return a;
}

AnswerSpec boolean(bool b) {
  AnswerSpec a;
  a.kind = eval::AnswerKind::boolean;
  a.boolean = b;
  return a;
}

}  // namespace stratus::bench::detail
