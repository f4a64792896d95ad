#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "stratus/gridstore.hpp"

namespace stratus::grid {

namespace {

constexpr int kMaxDegree = 4;

struct Profile {
  // Zonal-mean climatology as a function of latitude (radians).
  std::function<double(double)> base;
  double harmonic_amp;
  double diurnal_amp;
  double noise_amp;
};

Profile profile_for(const std::string& name) {
  using std::cos;
  using std::sin;
  if (name == "temperature_2m")
    return {[](double p) { return 250.0 + 50.0 * cos(p) * cos(p); }, 9.0, 4.0, 0.4};
  if (name == "wind_u_10m") return {[](double p) { return -6.0 * cos(3.0 * p); }, 5.0, 0.8, 0.3};
  if (name == "wind_v_10m") return {[](double p) { return 1.5 * sin(2.0 * p); }, 4.0, 0.6, 0.3};
  if (name == "mean_sea_level_pressure")
    return {[](double p) { return 101325.0 - 900.0 * cos(4.0 * p); }, 1300.0, 80.0, 30.0};
  if (name == "geopotential_500")
    return {[](double p) { return 50500.0 + 6500.0 * cos(p) * cos(p); }, 900.0, 20.0, 10.0};
  if (name == "temperature_850")
    return {[](double p) { return 245.0 + 45.0 * cos(p) * cos(p); }, 7.0, 1.5, 0.3};
  if (name == "wind_u_500")
    return {[](double p) { return 22.0 * sin(2.0 * p) * sin(2.0 * p); }, 9.0, 0.5, 0.5};
  if (name == "wind_v_500") return {[](double p) { return 0.0 * p; }, 7.0, 0.4, 0.5};
  if (name == "specific_humidity_700")
    return {[](double p) { return 0.0008 + 0.007 * std::pow(cos(p), 4); }, 0.0012, 0.0002, 0.00005};
  throw Error("unknown_variable", "no synthetic profile for '" + name + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform in [-1, 1), a pure function of its inputs.
double hashed_noise(std::uint64_t seed, std::uint64_t var, std::uint64_t t, std::uint64_t i,
                    std::uint64_t j) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (var * 0x100000001B3ull));
  h = splitmix64(h ^ t);
  h = splitmix64(h ^ (i << 20) ^ j);
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

struct Harmonic {
  int l;
  int m;
  double coeff;
  double phase;
  double drift;  // radians per time step
};

}  // namespace

GridDataset synth_dataset(std::uint64_t seed, const std::vector<std::string>& variables,
                          std::size_t n_times, const GridSpec& spec, std::int64_t start_epoch_s) {
  if (n_times < 1) throw Error("dimension_mismatch", "n_times must be >= 1");
  GridDataset ds(spec, start_epoch_s, n_times);
  const double deg = std::numbers::pi / 180.0;
  const std::size_t nlat = spec.n_lat();
  const std::size_t nlon = spec.n_lon();

  for (const auto& requested : variables) {
    const VariableInfo& info = lookup_variable(requested);
    if (ds.has_variable(info.name)) continue;
    const Profile prof = profile_for(info.name);
    const std::size_t var_index = static_cast<std::size_t>(&info - variable_registry().data());

    std::mt19937_64 rng(splitmix64(seed) ^ splitmix64(0xC0FFEEull + var_index));
    std::vector<Harmonic> terms;
    double norm = 0.0;
    for (int l = 1; l <= kMaxDegree; ++l)
      for (int m = 0; m <= l; ++m) {
        Harmonic h{l, m, uniform(rng, -1.0, 1.0) / l, uniform(rng, 0.0, 2.0 * std::numbers::pi),
                   uniform(rng, -0.25, 0.25)};
        norm += std::abs(h.coeff);
        terms.push_back(h);
      }

    // Separable pieces: Legendre factor per row, cos/sin(m*lon) per column.
    std::vector<std::vector<double>> legendre(terms.size(), std::vector<double>(nlat));
    std::vector<std::vector<double>> cos_m(kMaxDegree + 1, std::vector<double>(nlon));
    std::vector<std::vector<double>> sin_m(kMaxDegree + 1, std::vector<double>(nlon));
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto& h = terms[k];
      const double scale = std::sqrt(factorial(h.l - h.m) / factorial(h.l + h.m));
      for (std::size_t i = 0; i < nlat; ++i) {
        const double x = std::sin(spec.lat_points[i] * deg);
        legendre[k][i] = scale * std::assoc_legendre(h.l, h.m, x) / norm;
      }
    }
    for (int m = 0; m <= kMaxDegree; ++m)
      for (std::size_t j = 0; j < nlon; ++j) {
        cos_m[m][j] = std::cos(m * spec.lon_points[j] * deg);
        sin_m[m][j] = std::sin(m * spec.lon_points[j] * deg);
      }

    std::vector<double> values(n_times * nlat * nlon);
    for (std::size_t t = 0; t < n_times; ++t) {
      const double hours = static_cast<double>(t) * spec.step_hours;
      for (std::size_t i = 0; i < nlat; ++i) {
        const double phi = spec.lat_points[i] * deg;
        const double base = prof.base(phi);
        for (std::size_t j = 0; j < nlon; ++j) {
          double harm = 0.0;
          for (std::size_t k = 0; k < terms.size(); ++k) {
            const auto& h = terms[k];
            const double psi = h.phase + h.drift * static_cast<double>(t);
            harm += legendre[k][i] *
                    (cos_m[h.m][j] * std::cos(psi) - sin_m[h.m][j] * std::sin(psi));
          }
          const double local_solar =
              2.0 * std::numbers::pi * hours / 24.0 + spec.lon_points[j] * deg - std::numbers::pi;
          const double diurnal = prof.diurnal_amp * std::cos(local_solar) * std::cos(phi);
          // Keyed on coordinates so a sub-grid sees the same values as the full grid.
          const double noise =
              prof.noise_amp *
              hashed_noise(seed, var_index, t,
                           static_cast<std::uint64_t>(std::llround((spec.lat_points[i] + 90.0) * 4)),
                           static_cast<std::uint64_t>(std::llround(spec.lon_points[j] * 4)));
          double v = base + prof.harmonic_amp * harm + diurnal + noise;
          v = std::clamp(v, info.min_value, info.max_value);
          values[(t * nlat + i) * nlon + j] = static_cast<double>(static_cast<float>(v));
        }
      }
    }
    ds.add_variable(info.name, info.units, std::move(values));
  }
  return ds;
}

}  // namespace stratus::grid
