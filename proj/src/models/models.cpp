#include "stratus/models.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "stratus/geolocator.hpp"

namespace stratus::models {

namespace {

std::vector<std::string> resolve_variables(const grid::GridDataset& ds,
                                           const std::vector<std::string>& requested) {
  std::vector<std::string> names;
  if (requested.empty()) {
    for (const auto& v : grid::variable_registry()) names.push_back(v.name);
  } else {
    for (const auto& r : requested) names.push_back(grid::lookup_variable(r).name);
  }
  for (const auto& n : names)
    if (!ds.has_variable(n)) throw Error("missing_variable", "initial data lacks variable '" + n + "'");
  return names;
}

std::vector<double> time_mean(const grid::GridDataset& ds, const std::string& name) {
  std::vector<double> mean(ds.spec().n_cells(), 0.0);
  for (std::size_t t = 0; t < ds.n_times(); ++t) {
    auto s = ds.slice(name, t);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += s[c];
  }
  for (auto& m : mean) m /= static_cast<double>(ds.n_times());
  return mean;
}

void check_finite(const std::vector<double>& v, const std::string& what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error("non_finite", what + " produced a non-finite value");
}

}  // namespace

PersistenceForecaster::PersistenceForecaster(double damping,
                                             std::optional<grid::GridDataset> climatology_source)
    : damping_(damping), climatology_source_(std::move(climatology_source)) {
  if (!(damping_ >= 0.0 && damping_ <= 1.0)) throw Error("bad_config", "damping must be in [0, 1]");
}

grid::GridDataset PersistenceForecaster::forecast(const ForecastRequest& req) const {
  const auto& spec = req.initial.spec();
  if (req.horizon_hours <= 0 || req.horizon_hours > kMaxForecastHours)
    throw Error("bad_horizon", "forecast horizon must be in (0, " + std::to_string(kMaxForecastHours) +
                                   "] hours, got " + std::to_string(req.horizon_hours));
  if (req.horizon_hours % spec.step_hours != 0)
    throw Error("bad_horizon", "forecast horizon must be a multiple of " +
                                   std::to_string(spec.step_hours) + " hours");
  const auto names = resolve_variables(req.initial, req.variables);
  const std::size_t steps = static_cast<std::size_t>(req.horizon_hours / spec.step_hours);
  const std::size_t n = spec.n_cells();
  const std::size_t last = req.initial.n_times() - 1;

  grid::GridDataset out(spec,
                        req.initial.start_epoch_s() +
                            static_cast<std::int64_t>(req.initial.n_times()) * spec.step_hours * 3600,
                        steps);
  for (const auto& name : names) {
    const bool use_source = climatology_source_ && climatology_source_->spec() == spec &&
                            climatology_source_->has_variable(name);
    const std::vector<double> clim = time_mean(use_source ? *climatology_source_ : req.initial, name);
    std::vector<double> state(req.initial.slice(name, last).begin(), req.initial.slice(name, last).end());
    std::vector<double> values;
    values.reserve(steps * n);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t c = 0; c < n; ++c) state[c] = clim[c] + damping_ * (state[c] - clim[c]);
      values.insert(values.end(), state.begin(), state.end());
    }
    check_finite(values, "forecast");
    out.add_variable(name, req.initial.units(name), std::move(values));
  }
  return out;
}

void SimConfig::validate() const {
  if (total_hours < 6 || total_hours % 6 != 0)
    throw Error("bad_config", "total_hours must be a positive multiple of 6");
  if (!(param_alpha >= 0.0 && param_alpha <= 1.0))
    throw Error("bad_config", "param_alpha must be in [0, 1]");
  if (!(advection_scale >= 0.0 && advection_scale <= 1.0))
    throw Error("bad_config", "advection_scale violates the CFL bound");
  if (!(diffusion_scale >= 0.0 && diffusion_scale <= 0.25))
    throw Error("bad_config", "diffusion_scale violates the explicit stability bound");
  if (perturbation && !(perturbation->sigma_deg > 0.0))
    throw Error("bad_config", "perturbation sigma_deg must be > 0");
}

grid::GridDataset apply_perturbation(const grid::GridDataset& field, const GaussianPerturbation& p) {
  if (!(p.sigma_deg > 0.0)) throw Error("bad_perturbation", "sigma_deg must be > 0");
  const std::string name = grid::lookup_variable(p.variable).name;
  if (!field.has_variable(name))
    throw Error("unknown_variable", "cannot perturb missing variable '" + p.variable + "'");
  const auto& spec = field.spec();
  const double width_km = p.sigma_deg * kKmPerDegree;
  std::vector<double> bump(spec.n_cells());
  for (std::size_t i = 0; i < spec.n_lat(); ++i)
    for (std::size_t j = 0; j < spec.n_lon(); ++j) {
      const double d = geo::geodesic_km(spec.lat_points[i], spec.lon_points[j], p.center_lat, p.center_lon);
      bump[spec.cell(i, j)] = p.amplitude * std::exp(-d * d / (2.0 * width_km * width_km));
    }

  grid::GridDataset out(spec, field.start_epoch_s(), field.n_times());
  for (const auto& v : field.variable_names()) {
    std::vector<double> values;
    values.reserve(field.n_times() * spec.n_cells());
    for (std::size_t t = 0; t < field.n_times(); ++t) {
      auto s = field.slice(v, t);
      for (std::size_t c = 0; c < s.size(); ++c) values.push_back(v == name ? s[c] + bump[c] : s[c]);
    }
    out.add_variable(v, field.units(v), std::move(values));
  }
  return out;
}

grid::GridDataset AdvDiffSimulator::simulate(const grid::GridDataset& initial, const SimConfig& cfg) const {
  cfg.validate();
  grid::GridDataset start = initial.slice_time(initial.n_times() - 1, initial.n_times());
  if (cfg.perturbation) start = apply_perturbation(start, *cfg.perturbation);

  const auto& spec = start.spec();
  const std::size_t nlat = spec.n_lat(), nlon = spec.n_lon(), n = spec.n_cells();
  const std::size_t steps = static_cast<std::size_t>(cfg.total_hours / spec.step_hours);
  const double courant = cfg.param_alpha * cfg.advection_scale;
  const double kappa = cfg.param_alpha * cfg.diffusion_scale;
  const bool periodic = spec.periodic_lon();

  auto west = [&](std::size_t j) { return j > 0 ? j - 1 : (periodic ? nlon - 1 : 0); };
  auto east = [&](std::size_t j) { return j + 1 < nlon ? j + 1 : (periodic ? 0 : nlon - 1); };

  grid::GridDataset out(spec, start.start_epoch_s(), steps + 1);
  for (const auto& name : start.variable_names()) {
    std::vector<double> state(start.slice(name, 0).begin(), start.slice(name, 0).end());
    std::vector<double> next(n);
    std::vector<double> values;
    values.reserve((steps + 1) * n);
    values.insert(values.end(), state.begin(), state.end());
    for (std::size_t s = 0; s < steps; ++s) {
      if (courant > 0.0) {
        for (std::size_t i = 0; i < nlat; ++i)
          for (std::size_t j = 0; j < nlon; ++j) {
            const std::size_t c = i * nlon + j;
            next[c] = state[c] - courant * (state[c] - state[i * nlon + west(j)]);
          }
        state.swap(next);
      }
      if (kappa > 0.0) {
        for (std::size_t i = 0; i < nlat; ++i) {
          const std::size_t up = i + 1 < nlat ? i + 1 : i;
          const std::size_t down = i > 0 ? i - 1 : i;
          for (std::size_t j = 0; j < nlon; ++j) {
            const std::size_t c = i * nlon + j;
            const double lap = state[up * nlon + j] + state[down * nlon + j] + state[i * nlon + east(j)] +
                               state[i * nlon + west(j)] - 4.0 * state[c];
            next[c] = state[c] + kappa * lap;
          }
        }
        state.swap(next);
      }
      values.insert(values.end(), state.begin(), state.end());
    }
    check_finite(values, "simulation");
    out.add_variable(name, start.units(name), std::move(values));
  }
  return out;
}

double counterfactual_delta(const Simulator& sim, const grid::GridDataset& initial, SimConfig cfg,
                            const GaussianPerturbation& p, const std::string& variable,
                            double probe_lat, double probe_lon, int at_hours) {
  if (!(probe_lat >= -90.0 && probe_lat <= 90.0) || !(probe_lon >= -180.0 && probe_lon < 360.0))
    throw Error("out_of_range", "probe coordinate out of range");
  if (at_hours < 0 || at_hours > cfg.total_hours || at_hours % initial.spec().step_hours != 0)
    throw Error("bad_time", "at_hours must be a multiple of the step within the simulation");
  const auto& spec = initial.spec();
  const std::size_t t = static_cast<std::size_t>(at_hours / spec.step_hours);
  const std::size_t i = spec.nearest_lat(probe_lat), j = spec.nearest_lon(probe_lon);

  cfg.perturbation.reset();
  const grid::GridDataset base = sim.simulate(initial, cfg);
  cfg.perturbation = p;
  const grid::GridDataset perturbed = sim.simulate(initial, cfg);
  return perturbed.at(variable, t, i, j) - base.at(variable, t, i, j);
}

double change_summary(const grid::GridDataset& simulation, const std::string& variable, int hours) {
  const auto& spec = simulation.spec();
  const std::size_t t = static_cast<std::size_t>(hours / spec.step_hours);
  auto a = simulation.slice(variable, 0);
  auto b = simulation.slice(variable, t);
  double sum = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) sum += std::abs(b[c] - a[c]);
  return sum / static_cast<double>(a.size());
}

AlphaEstimate estimate_alpha(const Simulator& sim, const grid::GridDataset& initial,
                             const std::string& variable, double target_summary, int hours,
                             double tolerance, int max_calls) {
  const std::string name = grid::lookup_variable(variable).name;
  const grid::GridDataset one = initial.slice_time(initial.n_times() - 1, initial.n_times());
  grid::GridDataset just_var(one.spec(), one.start_epoch_s(), 1);
  just_var.add_variable(name, one.units(name),
                        std::vector<double>(one.slice(name, 0).begin(), one.slice(name, 0).end()));

  double lo = 0.0, hi = 1.0;
  int calls = 0;
  while (hi - lo > 2.0 * tolerance && calls < max_calls) {
    const double mid = 0.5 * (lo + hi);
    SimConfig cfg;
    cfg.total_hours = hours;
    cfg.param_alpha = mid;
    const double s = change_summary(sim.simulate(just_var, cfg), name, hours);
    ++calls;
    if (s < target_summary)
      lo = mid;
    else
      hi = mid;
  }
  return {0.5 * (lo + hi), calls};
}

namespace {

struct Registry {
  std::mutex mu;
  std::map<std::string, ForecasterFactory> forecasters{
      {"persistence", [] { return std::make_unique<PersistenceForecaster>(); }}};
  std::map<std::string, SimulatorFactory> simulators{
      {"advdiff", [] { return std::make_unique<AdvDiffSimulator>(); }}};
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_forecaster(const std::string& name, ForecasterFactory factory) {
  std::lock_guard lock(registry().mu);
  registry().forecasters[name] = std::move(factory);
}

void register_simulator(const std::string& name, SimulatorFactory factory) {
  std::lock_guard lock(registry().mu);
  registry().simulators[name] = std::move(factory);
}

std::unique_ptr<Forecaster> make_forecaster(const std::string& name) {
  std::lock_guard lock(registry().mu);
  auto it = registry().forecasters.find(name);
  if (it == registry().forecasters.end()) throw Error("unknown_backend", "no forecaster named '" + name + "'");
  return it->second();
}

std::unique_ptr<Simulator> make_simulator(const std::string& name) {
  std::lock_guard lock(registry().mu);
  auto it = registry().simulators.find(name);
  if (it == registry().simulators.end()) throw Error("unknown_backend", "no simulator named '" + name + "'");
  return it->second();
}

}  // namespace stratus::models
