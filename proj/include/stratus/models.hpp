#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stratus/gridstore.hpp"

namespace stratus::models {

inline constexpr int kMaxForecastHours = 336;
inline constexpr double kKmPerDegree = 111.2;

struct ForecastRequest {
  grid::GridDataset initial;
  int horizon_hours = 0;
  /// Variables to propagate; empty means the full registry.
  std::vector<std::string> variables;
};

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::string name() const = 0;
  /// Returns horizon_hours / step_hours new time steps following the last
  /// step of the initial data.
  virtual grid::GridDataset forecast(const ForecastRequest& req) const = 0;
};

/// Damped persistence: each step relaxes the field toward a per-cell
/// climatology, field <- clim + damping * (field - clim).
class PersistenceForecaster final : public Forecaster {
 public:
  explicit PersistenceForecaster(double damping = 0.98,
                                 std::optional<grid::GridDataset> climatology_source = std::nullopt);
  std::string name() const override { return "persistence"; }
  grid::GridDataset forecast(const ForecastRequest& req) const override;

 private:
  double damping_;
  std::optional<grid::GridDataset> climatology_source_;
};

struct GaussianPerturbation {
  std::string variable;
  double center_lat = 0.0;
  double center_lon = 0.0;
  double sigma_deg = 1.0;
  double amplitude = 0.0;
};

struct SimConfig {
  int total_hours = 24;
  /// Hidden tunable in [0, 1]; scales both advection and diffusion.
  double param_alpha = 0.5;
  std::optional<GaussianPerturbation> perturbation;
  std::uint64_t seed = 0;
  /// Cells per step of zonal transport at alpha = 1 (upwind, stable <= 1).
  double advection_scale = 0.4;
  /// Diffusion number at alpha = 1 (explicit five-point stencil, stable <= 0.25).
  double diffusion_scale = 0.1;

  void validate() const;
};

class Simulator {
 public:
  virtual ~Simulator() = default;
  virtual std::string name() const = 0;
  /// Runs from the last time step of `initial`; the result holds
  /// total_hours / step_hours + 1 steps, index 0 being the (perturbed) start.
  virtual grid::GridDataset simulate(const grid::GridDataset& initial, const SimConfig& cfg) const = 0;
};

/// Zonal upwind advection followed by five-point diffusion each step; both
/// linear in the field.
class AdvDiffSimulator final : public Simulator {
 public:
  std::string name() const override { return "advdiff"; }
  grid::GridDataset simulate(const grid::GridDataset& initial, const SimConfig& cfg) const override;
};

/// Adds amplitude * exp(-d^2 / (2 (sigma_deg * 111.2 km)^2)) to every step of
/// one variable, d being the great-circle distance from the center.
grid::GridDataset apply_perturbation(const grid::GridDataset& field, const GaussianPerturbation& p);

/// Perturbed minus unperturbed value of `variable` at the grid cell nearest
/// the probe, `at_hours` into two otherwise identical simulations.
double counterfactual_delta(const Simulator& sim, const grid::GridDataset& initial, SimConfig cfg,
                            const GaussianPerturbation& p, const std::string& variable,
                            double probe_lat, double probe_lon, int at_hours);

/// Global mean absolute change of `variable` between the start of a
/// simulation and `hours` later. Strictly increasing in alpha for the
/// advection-diffusion backend on smooth fields.
double change_summary(const grid::GridDataset& simulation, const std::string& variable, int hours = 24);

struct AlphaEstimate {
  double alpha;
  int simulator_calls;
};

/// Bisection on alpha in [0, 1] matching change_summary to `target_summary`.
AlphaEstimate estimate_alpha(const Simulator& sim, const grid::GridDataset& initial,
                             const std::string& variable, double target_summary, int hours = 24,
                             double tolerance = 0.005, int max_calls = 19);

// Backend registry ("persistence", "advdiff" are built in).
using ForecasterFactory = std::function<std::unique_ptr<Forecaster>()>;
using SimulatorFactory = std::function<std::unique_ptr<Simulator>()>;

void register_forecaster(const std::string& name, ForecasterFactory factory);
void register_simulator(const std::string& name, SimulatorFactory factory);
/// Throws Error{"unknown_backend"}.
std::unique_ptr<Forecaster> make_forecaster(const std::string& name);
std::unique_ptr<Simulator> make_simulator(const std::string& name);

}  // namespace stratus::models
