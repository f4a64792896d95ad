#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stratus/bench.hpp"

namespace stratus::bench::detail {

/// mt19937_64 is fully specified by the standard; the distributions are not,
/// so draws are mapped by hand to stay identical across standard libraries.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  std::size_t index(std::size_t n);
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool coin() { return index(2) == 1; }
  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[index(items.size())];
  }

 private:
  std::mt19937_64 rng_;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b);

/// Shortest round-trip decimal rendering.
std::string fmt(double v);
double round_sig(double v, int digits);

/// Features (optionally of one kind) covering at least one cell, by name.
std::vector<const geo::GeoFeature*> features_with_cells(const geo::GeoIndex& index,
                                                        std::optional<geo::FeatureKind> kind = std::nullopt);
/// Cells of the feature with exactly this name. Throws Error{"unknown_feature"}.
const std::vector<std::size_t>& cells_named(const geo::GeoIndex& index, const std::string& name);

/// Values of `var` on `cells` for steps [t0, t1), time-major.
std::vector<double> region_values(const grid::GridDataset& ds, const std::string& var,
                                  const std::vector<std::size_t>& cells, std::size_t t0, std::size_t t1);
double mean_of(const std::vector<double>& xs);
double median_of(std::vector<double> xs);
double quantile_of(std::vector<double> xs, double q);
/// Mean over cells at each step of [t0, t1).
std::vector<double> spatial_means(const grid::GridDataset& ds, const std::string& var,
                                  const std::vector<std::size_t>& cells, std::size_t t0, std::size_t t1);
/// Index of the first largest (or smallest) item.
std::size_t arg_extreme(const std::vector<double>& xs, bool want_max);

std::string var_text(const std::string& var);
std::size_t steps_of(int hours, const grid::GridSpec& spec);

std::size_t get_size(const nlohmann::json& b, const char* key);
double get_double(const nlohmann::json& b, const char* key);
std::string get_string(const nlohmann::json& b, const char* key);

AnswerSpec numeric(double value, const std::string& units, double sigma);
AnswerSpec hours_answer(double hours);
AnswerSpec location(const std::string& name);
AnswerSpec boolean(bool b);

}  // namespace stratus::bench::detail
