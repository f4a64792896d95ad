#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "stratus/chat.hpp"
#include "stratus/evalkit.hpp"
#include "support/lp_oracle.hpp"

using namespace stratus;
using namespace stratus::eval;

namespace {

const geo::GeoIndex& world() {
  static const geo::GeoIndex index = geo::GeoIndex::load("data/world.geojson");
  return index;
}

const AliasTable& aliases() {
  static const AliasTable t = AliasTable::load("data/aliases.txt");
  return t;
}

geo::RegionDistribution point_mass(const grid::GridSpec& spec, double lat, double lon) {
  geo::RegionDistribution d{"point", spec.n_lat(), spec.n_lon(), std::vector<double>(spec.n_cells(), 0.0)};
  d.mass[spec.cell(spec.nearest_lat(lat), spec.nearest_lon(lon))] = 1.0;
  return d;
}

geo::RegionDistribution random_dist(const grid::GridSpec& spec, std::mt19937_64& rng, std::size_t support) {
  geo::RegionDistribution d{"rand", spec.n_lat(), spec.n_lon(), std::vector<double>(spec.n_cells(), 0.0)};
  std::uniform_int_distribution<std::size_t> cell(0, spec.n_cells() - 1);
  std::uniform_real_distribution<double> w(0.05, 1.0);
  std::size_t placed = 0;
  while (placed < support) {
    const std::size_t c = cell(rng);
    if (d.mass[c] > 0) continue;
    d.mass[c] = w(rng);
    ++placed;
  }
  double total = 0;
  for (double m : d.mass) total += m;
  for (double& m : d.mass) m /= total;
  return d;
}

double oracle_emd(const geo::RegionDistribution& a, const geo::RegionDistribution& b, const grid::GridSpec& spec) {
  std::vector<std::size_t> ca, cb;
  std::vector<double> sa, sb;
  for (std::size_t c = 0; c < a.mass.size(); ++c)
    if (a.mass[c] > 0) {
      ca.push_back(c);
      sa.push_back(a.mass[c]);
    }
  for (std::size_t c = 0; c < b.mass.size(); ++c)
    if (b.mass[c] > 0) {
      cb.push_back(c);
      sb.push_back(b.mass[c]);
    }
  std::vector<double> cost;
  for (std::size_t i : ca)
    for (std::size_t j : cb) {
      const double lat1 = spec.lat_points[i / spec.n_lon()], lon1 = spec.lon_points[i % spec.n_lon()];
      const double lat2 = spec.lat_points[j / spec.n_lon()], lon2 = spec.lon_points[j % spec.n_lon()];
      // Haversine written out independently of the library.
      const double r = 3.14159265358979323846 / 180.0;
      const double h = std::pow(std::sin((lat2 - lat1) * r / 2), 2) +
                       std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin((lon2 - lon1) * r / 2), 2);
      cost.push_back(2 * 6371.0 * std::asin(std::min(1.0, std::sqrt(h))));
    }
  return oracle::lp_transport(sa, sb, cost);
}

}  // namespace

TEST_CASE("sae, quantiles, hours and relative error") {
  CHECK(sae(300, 290, 20) == 0.5);
  CHECK(sae(290, 290, 20) == 0.0);
  CHECK_THROWS_AS(sae(1, 2, 0), Error);
  CHECK(quantiles({0, 1, 2, 3}, {0.5})[0] == 1.5);
  CHECK(quantiles({3, 0, 2, 1}, {0.0, 1.0}) == std::vector<double>{0, 3});
  CHECK_THROWS_AS(quantiles({}, {0.5}), Error);
  CHECK_THROWS_AS(quantiles({1}, {1.5}), Error);
  CHECK(hours_abs_error(30, 30) == 0.0);
  CHECK(hours_abs_error(24, 30) == 6.0);
  CHECK(relative_error(105, 100) == doctest::Approx(0.05));
  CHECK(relative_error(0.01, 0) == 0.01);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 17);
    for (double& x : v) x = u(rng);
    const std::vector<double> qs = {0.0, 0.25, 0.5, 0.75, 0.99, 1.0};
    const auto out = quantiles(v, qs);
    CHECK(std::is_sorted(out.begin(), out.end()));
    CHECK(out.front() == *std::min_element(v.begin(), v.end()));
    CHECK(out.back() == *std::max_element(v.begin(), v.end()));
  }
}

TEST_CASE("location matching") {
  CHECK(match_location("USA", world(), aliases()) == std::optional<std::string>("United States of America"));
  CHECK(match_location("pacifc ocean", world(), aliases()) == std::optional<std::string>("Pacific Ocean"));
  CHECK(match_location("Mordor", world(), aliases()) == std::nullopt);
  CHECK(match_location("  northland ", world(), aliases()) == std::optional<std::string>("Northland"));
  CHECK_THROWS_AS(AliasTable::parse("no equals sign"), Error);
  CHECK(AliasTable::parse("# c\n\nA = B\n").lookup("a") == std::optional<std::string>("B"));
}

TEST_CASE("EMD basics") {
  const grid::GridSpec spec = grid::make_grid();
  const auto a = point_mass(spec, 0, 0);
  CHECK(location_emd(a, a, spec) == 0.0);
  CHECK(location_emd(a, point_mass(spec, 0, 180), spec) == doctest::Approx(20015.09).epsilon(0.01 / 20015.09));
  const auto n = geo::region_distribution(world(), "northland");
  CHECK(location_emd(n, n, spec) == 0.0);
  geo::RegionDistribution empty{"none", spec.n_lat(), spec.n_lon(), std::vector<double>(spec.n_cells(), 0.0)};
  CHECK_THROWS_AS(location_emd(a, empty, spec), Error);
  CHECK_THROWS_AS(location_emd(point_mass(grid::make_subgrid(0, 0, 8, 8), 0, 0), a, spec), Error);

  // Truncation keeps the k heaviest cells and renormalizes.
  std::mt19937_64 rng(5);
  const auto big = random_dist(spec, rng, 20);
  geo::RegionDistribution cut = big;
  std::vector<double> sorted = big.mass;
  std::sort(sorted.rbegin(), sorted.rend());
  for (double& m : cut.mass)
    if (m < sorted[9]) m = 0;
  double total = 0;
  for (double m : cut.mass) total += m;
  for (double& m : cut.mass) m /= total;
  CHECK(location_emd(big, a, spec, 10) == doctest::Approx(location_emd(cut, a, spec)).epsilon(1e-12));
}

TEST_CASE("EMD equals the LP oracle and behaves as a metric") {
  const grid::GridSpec spec = grid::make_grid();
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t na = 1 + trial % 8, nb = 1 + (trial / 8) % 8;
    const auto a = random_dist(spec, rng, na);
    const auto b = random_dist(spec, rng, nb);
    const double got = location_emd(a, b, spec);
    const double want = oracle_emd(a, b, spec);
    CAPTURE(trial);
    CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, want));
    CHECK(location_emd(b, a, spec) == doctest::Approx(got).epsilon(1e-9));
    const auto c = random_dist(spec, rng, 1 + trial % 5);
    CHECK(got <= location_emd(a, c, spec) + location_emd(c, b, spec) + 1e-6);
    CHECK(got > 0.0);
  }
}

TEST_CASE("transport solvers agree on dense and degenerate problems") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 20 + trial % 7, m = 30 - trial % 5;
    std::vector<double> s(n), d(m), c(n * m);
    // Integer masses with equal totals produce many degenerate pivots.
    const bool degenerate = trial % 2 == 0;
    for (auto& x : s) x = degenerate ? small(rng) : u(rng) + 0.01;
    for (auto& x : d) x = degenerate ? small(rng) : u(rng) + 0.01;
    double ts = 0, td = 0;
    for (double x : s) ts += x;
    for (double x : d) td += x;
    if (degenerate) {
      // Pad the smaller side so totals match exactly.
      if (ts < td) s.back() += td - ts;
      else d.back() += ts - td;
    } else {
      for (auto& x : d) x *= ts / td;
    }
    for (auto& x : c) x = std::floor(u(rng) * 10.0);
    const double lp = oracle::lp_transport(s, d, c);
    CHECK(transport_cost(s, d, c) == doctest::Approx(lp).epsilon(1e-9));
    CHECK(transport_cost_ssp(s, d, c) == doctest::Approx(lp).epsilon(1e-9));
  }
  // Full 256-cell supports on the canonical grid against the slower solver.
  const auto spec = world().spec();
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> s(256), d(256), c(256 * 256);
    std::uniform_int_distribution<std::size_t> cell(0, spec.n_cells() - 1);
    std::vector<std::size_t> cs(256), cd(256);
    for (auto& x : cs) x = cell(rng);
    for (auto& x : cd) x = cell(rng);
    for (auto& x : s) x = u(rng) + 0.01;
    for (auto& x : d) x = u(rng) + 0.01;
    double ts = 0, td = 0;
    for (double x : s) ts += x;
    for (double x : d) td += x;
    for (auto& x : d) x *= ts / td;
    for (std::size_t i = 0; i < 256; ++i)
      for (std::size_t j = 0; j < 256; ++j) c[i * 256 + j] = geo::cell_distance_km(spec, cs[i], cd[j]);
    CHECK(transport_cost(s, d, c) == doctest::Approx(transport_cost_ssp(s, d, c)).epsilon(1e-9));
  }
}

TEST_CASE("discussion scores") {
  const DiscussionScore s = discussion_scores({{.8, .1, .1}, {.2, .1, .7}}, {{.6, .2, .2}, {.4, .1, .5}});
  CHECK(s.s == std::vector<std::size_t>{0});
  CHECK(s.n == 2);
  CHECK(s.precision == doctest::Approx(0.8889).epsilon(1e-4));
  CHECK(s.recall == doctest::Approx(0.5));
  CHECK(s.f1 == doctest::Approx(0.64).epsilon(1e-4));
  const DiscussionScore perfect = discussion_scores({{1, 0, 0}, {1, 0, 0}}, {{1, 0, 0}});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
  const DiscussionScore none = discussion_scores({{0, 0, 1}}, {{1, 0, 0}});
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(discussion_scores({}, {}).f1 == 0.0);
  CHECK_THROWS_AS(discussion_scores({{0.5, 0.5, 0.5}}, {}), Error);
  const auto p = LabelProbs::from_logits(2, 1, 0);
  CHECK(p.p_supported + p.p_refuted + p.p_neutral == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.p_supported > p.p_refuted);
}

TEST_CASE("extreme scores") {
  const ExtremeScore both_empty = extreme_scores({}, {}, world(), aliases());
  CHECK(both_empty.emd_km == 0.0);
  CHECK(correctness(Rule::emd, both_empty.emd_km));
  CHECK(extreme_scores({"USA", "Canada"}, {"Canada", "United States of America"}, world(), aliases()).emd_km == 0.0);
  const auto disjoint = extreme_scores({"Northland"}, {"Eastmark"}, world(), aliases());
  CHECK(disjoint.emd_km == doctest::Approx(location_emd(geo::region_distribution(world(), "northland"),
                                                        geo::region_distribution(world(), "eastmark"),
                                                        world().spec()))
                               .epsilon(1e-12));
  CHECK(std::isinf(extreme_scores({"Northland"}, {}, world(), aliases()).emd_km));
  CHECK(std::isinf(extreme_scores({"Mordor"}, {"Northland"}, world(), aliases()).emd_km));
  CHECK(occurrence_f1({both_empty, both_empty}) == 1.0);
  CHECK(occurrence_f1({{true, true, 0}, {true, false, 0}, {false, true, 0}}) == doctest::Approx(0.5));
}

TEST_CASE("correctness thresholds are strict") {
  CHECK(correctness(Rule::sae, 0.049));
  CHECK_FALSE(correctness(Rule::sae, 0.05));
  CHECK(correctness(Rule::relative, 0.049));
  CHECK_FALSE(correctness(Rule::relative, 0.05));
  CHECK(correctness(Rule::emd, 99.9));
  CHECK_FALSE(correctness(Rule::emd, 100.0));
  CHECK(correctness(Rule::discussion, 0.51));
  CHECK_FALSE(correctness(Rule::discussion, 0.5));
  CHECK(correctness(Rule::hours, 0.0));
  CHECK_FALSE(correctness(Rule::hours, 1e-9));
  CHECK(correctness(Rule::boolean, 1.0));
  CHECK_FALSE(correctness(Rule::location, 0.0));
  CHECK(parse_rule("emd") == Rule::emd);
  CHECK_THROWS_AS(parse_rule("vibes"), Error);
}

TEST_CASE("rule-based extraction") {
  auto a = verify_extract("q", "The answer is <solution> 288.4 K </solution>", AnswerKind::numeric);
  CHECK(a.valid);
  CHECK(a.number == 288.4);
  CHECK(a.units == "K");
  a = verify_extract("q", "   ", AnswerKind::numeric);
  CHECK_FALSE(a.valid);
  CHECK(a.reason == "no_answer");
  a = verify_extract("q", "no idea", AnswerKind::numeric);
  CHECK(a.reason == "no_number");
  a = verify_extract("q", "30 hours", AnswerKind::hours);
  CHECK(a.valid);
  CHECK(a.number == 30.0);
  CHECK(verify_extract("q", "<solution>-1.5e3 Pa</solution>", AnswerKind::numeric).number == -1500.0);
  CHECK(verify_extract("q", "<solution>Yes, it does.</solution>", AnswerKind::boolean).boolean);
  CHECK_FALSE(verify_extract("q", "false", AnswerKind::boolean).boolean);
  CHECK(verify_extract("q", "maybe", AnswerKind::boolean).reason == "no_boolean");
  CHECK(verify_extract("q", "<solution>\"Northland\".</solution>", AnswerKind::location).text == "Northland");
  CHECK(verify_extract("q", R"(<solution>["Northland", "Eastmark"]</solution>)", AnswerKind::location_list).items ==
        std::vector<std::string>{"Northland", "Eastmark"});
  CHECK(verify_extract("q", "Northland, Eastmark and Canada", AnswerKind::location_list).items ==
        std::vector<std::string>{"Northland", "Eastmark", "Canada"});
  const auto empty = verify_extract("q", "<solution>[]</solution>", AnswerKind::location_list);
  CHECK(empty.valid);
  CHECK(empty.items.empty());

  chat::MockClient judge({R"({"valid": true, "answer": "291 K"})"});
  CHECK(verify_extract("q", "It is probably 291 K, not 280 K", AnswerKind::numeric, &judge).number == 291.0);
  chat::MockClient refuse({R"({"valid": false})"});
  CHECK(verify_extract("q", "291", AnswerKind::numeric, &refuse).reason == "judge_invalid");
}

TEST_CASE("overlap judge and description scoring") {
  const OverlapJudge judge;
  const std::string ref = "Temperatures over Northland will rise. Rain is not expected in Eastmark.";
  CHECK(judge.classify("Northland temperatures rise", ref).p_supported == 0.8);
  CHECK(judge.classify("Rain is expected in Eastmark", ref).p_refuted == 0.8);
  CHECK(judge.classify("Volcanoes erupt on Mars", ref).p_neutral == 0.8);
  CHECK(split_claims("A is 1.5 K. B rises!\nC?") == std::vector<std::string>{"A is 1.5 K", "B rises", "C"});
  CHECK(score_description(ref, ref, judge).f1 == doctest::Approx(2 * (8.0 / 9) * 0.8 / (8.0 / 9 + 0.8)));
  CHECK(score_description("Volcanoes erupt on Mars.", ref, judge).f1 == 0.0);
}
