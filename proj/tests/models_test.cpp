#include <cmath>

#include "doctest.h"
#include "stratus/geolocator.hpp"
#include "stratus/models.hpp"

using namespace stratus;
using namespace stratus::models;
using grid::GridDataset;

namespace {

const GridDataset& data() {
  static const GridDataset ds = grid::synth_dataset(17, {"t2m", "msl"}, 4);
  return ds;
}

double spatial_variance(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size());
}

bool all_finite(const GridDataset& ds) {
  for (const auto& n : ds.variable_names())
    for (std::size_t t = 0; t < ds.n_times(); ++t)
      for (double x : ds.slice(n, t))
        if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

TEST_CASE("persistence forecast") {
  PersistenceForecaster fc;
  ForecastRequest req{data(), 24, {"t2m", "msl"}};
  const GridDataset out = fc.forecast(req);
  CHECK(out.n_times() == 4);
  CHECK(out.start_epoch_s() == data().start_epoch_s() + 4 * 6 * 3600);
  CHECK(all_finite(out));

  req.horizon_hours = 0;
  CHECK_THROWS_AS(fc.forecast(req), Error);
  req.horizon_hours = 342;
  CHECK_THROWS_AS(fc.forecast(req), Error);
  req.horizon_hours = 10;
  CHECK_THROWS_AS(fc.forecast(req), Error);
  req.horizon_hours = 336;
  CHECK(fc.forecast(req).n_times() == 56);

  SUBCASE("missing variable") {
    ForecastRequest bad{data(), 12, {}};  // full registry required
    CHECK_THROWS_WITH_AS(fc.forecast(bad), doctest::Contains("lacks variable"), Error);
  }

  SUBCASE("damping 1 is pure persistence") {
    PersistenceForecaster still(1.0);
    const GridDataset p = still.forecast({data(), 18, {"t2m"}});
    for (std::size_t t = 0; t < p.n_times(); ++t) {
      auto a = p.slice("t2m", t);
      auto b = data().slice("t2m", data().n_times() - 1);
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }

  SUBCASE("damped steps relax toward the time mean") {
    const auto& g = data().spec();
    const std::size_t c = g.cell(60, 10);
    double clim = 0.0;
    for (std::size_t t = 0; t < 4; ++t) clim += data().slice("t2m", t)[c];
    clim /= 4.0;
    const double x0 = data().slice("t2m", 3)[c];
    const GridDataset p = fc.forecast({data(), 12, {"t2m"}});
    CHECK(p.slice("t2m", 0)[c] == doctest::Approx(clim + 0.98 * (x0 - clim)));
    CHECK(p.slice("t2m", 1)[c] == doctest::Approx(clim + 0.98 * 0.98 * (x0 - clim)));
  }
}

TEST_CASE("gaussian perturbation") {
  const GridDataset one = data().slice_time(0, 1);
  const auto& g = one.spec();
  GaussianPerturbation p{"t2m", 30.0, 60.0, 2.0, 0.0};
  CHECK(apply_perturbation(one, p) == one);

  p.amplitude = 5.0;
  const GridDataset bumped = apply_perturbation(one, p);
  const std::size_t ci = g.nearest_lat(30.0), cj = g.nearest_lon(60.0);
  CHECK(std::abs(bumped.at("t2m", 0, ci, cj) - one.at("t2m", 0, ci, cj) - 5.0) < 1e-9);
  CHECK(bumped.at("msl", 0, ci, cj) == one.at("msl", 0, ci, cj));

  // Gaussian evaluated at 5 sigma: exp(-12.5) < exp(-12).
  const double five_sigma_km = 5.0 * 2.0 * kKmPerDegree;
  int far_cells = 0;
  for (std::size_t i = 0; i < g.n_lat(); ++i)
    for (std::size_t j = 0; j < g.n_lon(); ++j) {
      const double d = geo::geodesic_km(g.lat_points[i], g.lon_points[j], 30.0, 60.0);
      if (d < five_sigma_km) continue;
      ++far_cells;
      REQUIRE(std::abs(bumped.at("t2m", 0, i, j) - one.at("t2m", 0, i, j)) < 5.0 * std::exp(-12.0));
    }
  CHECK(far_cells > 20000);

  p.variable = "q700";
  CHECK_THROWS_AS(apply_perturbation(one, p), Error);
  p.variable = "nope";
  CHECK_THROWS_AS(apply_perturbation(one, p), Error);
}

TEST_CASE("advection-diffusion simulator") {
  AdvDiffSimulator sim;
  SimConfig cfg;
  cfg.total_hours = 24;
  cfg.param_alpha = 0.6;
  const GridDataset a = sim.simulate(data(), cfg);
  const GridDataset b = sim.simulate(data(), cfg);
  CHECK(a.n_times() == 5);
  CHECK(a == b);
  CHECK(all_finite(a));
  // Step 0 is the last input step.
  auto s0 = a.slice("t2m", 0);
  auto last = data().slice("t2m", 3);
  CHECK(std::equal(s0.begin(), s0.end(), last.begin()));

  SUBCASE("alpha 0 is the identity") {
    cfg.param_alpha = 0.0;
    const GridDataset z = sim.simulate(data(), cfg);
    for (std::size_t t = 0; t < z.n_times(); ++t) {
      auto x = z.slice("msl", t);
      auto y = data().slice("msl", 3);
      CHECK(std::equal(x.begin(), x.end(), y.begin()));
    }
  }

  SUBCASE("pure diffusion never increases spatial variance") {
    cfg.param_alpha = 1.0;
    cfg.advection_scale = 0.0;
    cfg.total_hours = 60;
    const GridDataset d = sim.simulate(data(), cfg);
    double prev = spatial_variance(d.slice("t2m", 0));
    for (std::size_t t = 1; t < d.n_times(); ++t) {
      const double v = spatial_variance(d.slice("t2m", t));
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
    CHECK(prev < spatial_variance(d.slice("t2m", 0)));
  }

  SUBCASE("invalid configs") {
    cfg.param_alpha = 1.5;
    CHECK_THROWS_AS(sim.simulate(data(), cfg), Error);
    cfg.param_alpha = 0.5;
    cfg.total_hours = 7;
    CHECK_THROWS_AS(sim.simulate(data(), cfg), Error);
    cfg.total_hours = 6;
    cfg.diffusion_scale = 0.3;
    CHECK_THROWS_AS(sim.simulate(data(), cfg), Error);
  }

  SUBCASE("sub-grid without wrap-around") {
    const GridDataset small = grid::synth_dataset(4, {"t2m"}, 1, grid::make_subgrid(50, 50, 8, 8));
    cfg.param_alpha = 1.0;
    const GridDataset r = sim.simulate(small, cfg);
    CHECK(r.n_times() == 5);
    CHECK(all_finite(r));
  }
}

TEST_CASE("counterfactual delta") {
  AdvDiffSimulator sim;
  SimConfig cfg;
  cfg.total_hours = 48;
  cfg.param_alpha = 0.7;
  GaussianPerturbation p{"t2m", 30.0, 60.0, 3.0, 0.0};
  CHECK(counterfactual_delta(sim, data(), cfg, p, "t2m", 30.0, 60.0, 48) == 0.0);

  p.amplitude = 2.5;
  CHECK(std::abs(counterfactual_delta(sim, data(), cfg, p, "t2m", 30.0, 60.0, 0) - 2.5) < 1e-9);

  const double d1 = counterfactual_delta(sim, data(), cfg, p, "t2m", 31.5, 63.0, 36);
  p.amplitude = 5.0;
  const double d2 = counterfactual_delta(sim, data(), cfg, p, "t2m", 31.5, 63.0, 36);
  CHECK(d1 != 0.0);
  CHECK(std::abs(d2 - 2.0 * d1) < 1e-6);

  CHECK_THROWS_AS(counterfactual_delta(sim, data(), cfg, p, "t2m", 95.0, 0.0, 6), Error);
  CHECK_THROWS_AS(counterfactual_delta(sim, data(), cfg, p, "t2m", 0.0, 0.0, 54), Error);
}

TEST_CASE("alpha is identifiable from the 24 h change summary") {
  AdvDiffSimulator sim;
  const GridDataset one = data().slice_time(3, 4);
  double prev = -1.0;
  for (int k = 0; k <= 10; ++k) {
    SimConfig cfg;
    cfg.param_alpha = k / 10.0;
    const double s = change_summary(sim.simulate(one, cfg), "t2m");
    CHECK(s > prev);
    prev = s;
  }

  SimConfig hidden;
  hidden.param_alpha = 0.37;
  const double target = change_summary(sim.simulate(one, hidden), "t2m");
  const AlphaEstimate est = estimate_alpha(sim, one, "t2m", target);
  CHECK(std::abs(est.alpha - 0.37) < 0.02);
  CHECK(est.simulator_calls < 20);
}

TEST_CASE("backend registry") {
  CHECK(make_forecaster("persistence")->name() == "persistence");
  CHECK(make_simulator("advdiff")->name() == "advdiff");
  CHECK_THROWS_AS(make_simulator("speedy"), Error);
  register_forecaster("still", [] { return std::make_unique<PersistenceForecaster>(1.0); });
  CHECK(make_forecaster("still")->name() == "persistence");
}
