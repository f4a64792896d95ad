#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "stratus/geolocator.hpp"
#include "stratus/textmatch.hpp"

using namespace stratus;
using namespace stratus::geo;

namespace {

const GeoIndex& world() {
  static const GeoIndex index = GeoIndex::load("data/world.geojson");
  return index;
}

std::vector<std::string> names_of(const std::vector<const GeoFeature*>& fs) {
  std::vector<std::string> out;
  for (const auto* f : fs) out.push_back(f->name);
  return out;
}

std::string rect_feature(const std::string& id, const std::string& kind, double x0, double x1,
                         double y0, double y1) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                R"({"type":"Feature","properties":{"id":"%s","name":"%s","kind":"%s","parent":null},)"
                R"("geometry":{"type":"Polygon","coordinates":[[[%g,%g],[%g,%g],[%g,%g],[%g,%g],[%g,%g]]]}})",
                id.c_str(), id.c_str(), kind.c_str(), x0, y0, x1, y0, x1, y1, x0, y1, x0, y0);
  return buf;
}

std::string collection(const std::vector<std::string>& features) {
  std::string out = R"({"type":"FeatureCollection","features":[)";
  for (std::size_t k = 0; k < features.size(); ++k) out += (k ? "," : "") + features[k];
  return out + "]}";
}

std::string load_error_code(const std::string& text) {
  try {
    GeoIndex::from_geojson(text);
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

}  // namespace

TEST_CASE("token sort ratio") {
  CHECK(text::normalize("  Pacific   OCEAN!") == "pacific ocean");
  CHECK(text::token_sort_ratio("ocean pacific", "Pacific Ocean") == 1.0);
  // "ocean pacifc" vs "ocean pacific": LCS 12 of lengths 12 + 13.
  CHECK(text::token_sort_ratio("pacifc ocean", "Pacific Ocean") == doctest::Approx(24.0 / 25.0));
  CHECK(text::indel_ratio("", "") == 1.0);
  CHECK(text::indel_ratio("abc", "") == 0.0);
  CHECK_FALSE(text::best_match("Atlantis", {"Atlantic Ocean", "Pacific Ocean"}, 0.85));
  auto tie = text::best_match("ab", {"ba", "ab c", "ab"}, 0.5);
  REQUIRE(tie);
  CHECK(tie->candidate == "ab");
}

TEST_CASE("fixture world loads with a full cell cache") {
  const GeoIndex& w = world();
  CHECK(w.features().size() == 18);
  CHECK(w.spec().is_canonical());
  for (const auto& f : w.features()) CHECK_MESSAGE(!w.cells_of(f.id).empty(), f.id);

  std::size_t cached = 0;
  for (std::size_t c = 0; c < w.spec().n_cells(); ++c)
    for (auto k : w.features_at(c)) {
      REQUIRE(k < w.features().size());
      ++cached;
    }
  CHECK(cached > 0);

  SUBCASE("a country's centroid cell lists that country") {
    // Northland spans lon [10, 50] x lat [45, 70]; (57, 30) is a grid point.
    const auto& g = w.spec();
    const auto cell = g.cell(g.nearest_lat(57.0), g.nearest_lon(30.0));
    bool found = false;
    for (auto k : w.features_at(cell)) found = found || w.features()[k].id == "northland";
    CHECK(found);
  }
}

TEST_CASE("12-feature collection") {
  std::vector<std::string> fs;
  for (int k = 0; k < 12; ++k)
    fs.push_back(rect_feature("f" + std::to_string(k), "other", 10.0 * k + 0.2, 10.0 * k + 8.2,
                              -20.2, 20.2));
  const GeoIndex idx = GeoIndex::from_geojson(collection(fs));
  CHECK(idx.features().size() == 12);
  for (const auto& f : idx.features()) CHECK(idx.cells_of(f.id).size() > 0);
}

TEST_CASE("load errors") {
  CHECK(load_error_code("not json") == "bad_geojson");
  CHECK(load_error_code(R"({"type":"Feature"})") == "bad_geojson");
  CHECK(load_error_code(collection({rect_feature("a", "country", 0, 5, 0, 5),
                                    rect_feature("a", "country", 10, 15, 0, 5)})) == "duplicate_id");
  CHECK(load_error_code(collection({rect_feature("a", "planet", 0, 5, 0, 5)})) == "bad_feature");

  const std::string bowtie =
      R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"x","name":"X","kind":"country"},)"
      R"("geometry":{"type":"Polygon","coordinates":[[[0,0],[10,10],[10,0],[0,10],[0,0]]]}}]})";
  CHECK(load_error_code(bowtie) == "self_intersection");

  const std::string open_ring =
      R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"x","name":"X","kind":"country"},)"
      R"("geometry":{"type":"Polygon","coordinates":[[[0,0],[10,0],[10,10],[0,10],[0,1]]]}}]})";
  CHECK(load_error_code(open_ring) == "unclosed_ring");

  const std::string orphan =
      R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":"x","name":"X","kind":"country","parent":"nope"},)"
      R"("geometry":{"type":"Polygon","coordinates":[[[0,0],[10,0],[10,10],[0,10],[0,0]]]}}]})";
  CHECK(load_error_code(orphan) == "unknown_parent");
  CHECK_THROWS_AS(GeoIndex::load("data/does_not_exist.geojson"), Error);
}

TEST_CASE("polygons crossing the 0/360 seam are split") {
  const GeoIndex& w = world();
  const auto& atlantic = w.feature("atlantic");
  CHECK(atlantic.polygons.size() == 2);
  CHECK(atlantic.contains(0.0, 358.5));
  CHECK(atlantic.contains(0.0, 0.0));
  CHECK(atlantic.contains(0.0, 3.0));
  CHECK_FALSE(atlantic.contains(0.0, 6.0));
  CHECK(atlantic.area_deg2 == doctest::Approx(70.0 * 120.0));
}

TEST_CASE("geocode") {
  const GeoIndex& w = world();
  CHECK(geocode(w, "Pacific Ocean").id == "pacific");
  CHECK(geocode(w, "pacific ocean").kind == FeatureKind::ocean);
  CHECK(geocode(w, "pacifc ocean").id == "pacific");
  CHECK_THROWS_WITH_AS(geocode(w, "Atlantis"), "no feature matches 'Atlantis'", Error);
  CHECK_THROWS_AS(geocode(w, "  "), Error);

  SUBCASE("every loaded feature geocodes to itself") {
    for (const auto& f : w.features()) CHECK(geocode(w, f.name).id == f.id);
  }
}

TEST_CASE("reverse_geocode") {
  const GeoIndex& w = world();
  CHECK(names_of(reverse_geocode(w, 57.0, 30.0)) == std::vector<std::string>{"Northland", "Borealia"});
  CHECK(names_of(reverse_geocode(w, -40.0, 200.0)) == std::vector<std::string>{"Pacific Ocean"});
  CHECK(names_of(reverse_geocode(w, 0.0, 200.0)) ==
        std::vector<std::string>{"Pacific Ocean", "Equatorial Belt"});
  CHECK(names_of(reverse_geocode(w, 30.2, 209.8)) ==
        std::vector<std::string>{"Pin Island", "Pacific Ocean"});
  CHECK(reverse_geocode(w, 80.0, 200.0).empty());
  CHECK_THROWS_AS(reverse_geocode(w, 95.0, 10.0), Error);
  CHECK_THROWS_AS(reverse_geocode(w, 10.0, 360.0), Error);

  SUBCASE("points inside fixture polygons are reported by their feature") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> lat(-89.0, 89.0), lon(0.0, 359.9);
    int hits = 0;
    for (int n = 0; n < 2000; ++n) {
      const auto& g = w.spec();
      // Snap to a cell center: containment is decided at centers.
      const double la = g.lat_points[g.nearest_lat(lat(rng))];
      const double lo = g.lon_points[g.nearest_lon(lon(rng))];
      for (const auto& f : w.features()) {
        if (!f.contains(la, lo)) continue;
        ++hits;
        const auto found = reverse_geocode(w, la, lo);
        CHECK(std::find(found.begin(), found.end(), &f) != found.end());
      }
    }
    CHECK(hits > 500);
  }
}

TEST_CASE("region masks and distributions") {
  const GeoIndex& w = world();
  for (const auto& f : w.features()) {
    const RegionMask m = region_mask(w, f.id);
    const RegionDistribution d = region_distribution(w, f.id);
    double total = 0.0;
    for (std::size_t k = 0; k < d.mass.size(); ++k) {
      total += d.mass[k];
      CHECK((d.mass[k] > 0.0) == (m.cells[k] == 1));
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  const RegionDistribution pin = region_distribution(w, "pin_island");
  const auto support = region_mask(w, "pin_island").support();
  REQUIRE(support.size() == 1);
  CHECK(pin.mass[support[0]] == 1.0);
  CHECK_THROWS_AS(region_mask(w, "nowhere"), Error);

  const auto tiny = GeoIndex::from_geojson(collection({rect_feature("speck", "other", 0.2, 0.4, 0.2, 0.4)}));
  CHECK_THROWS_WITH_AS(region_mask(tiny, "speck"), doctest::Contains("covers no grid cell"), Error);
}

TEST_CASE("sublocations") {
  const GeoIndex& w = world();
  CHECK(names_of(sublocations(w, "borealia")) ==
        std::vector<std::string>{"Eastmark", "Northland", "Riverlands", "Southvale"});
  CHECK(sublocations(w, "northland").empty());
  CHECK_THROWS_AS(sublocations(w, "mu"), Error);
}

TEST_CASE("geodesic_km") {
  CHECK(geodesic_km(10.0, 20.0, 10.0, 20.0) == 0.0);
  // pi * 6371 and pi/2 * 6371.
  CHECK(geodesic_km(0, 0, 0, 180) == doctest::Approx(20015.0868).epsilon(1e-9));
  CHECK(std::abs(geodesic_km(0, 0, 0, 180) - 20015.09) < 0.01);
  CHECK(std::abs(geodesic_km(0, 0, 90, 0) - 10007.54) < 0.01);

  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> lat(-90, 90), lon(0, 360);
  for (int n = 0; n < 500; ++n) {
    const double a[2] = {lat(rng), lon(rng)}, b[2] = {lat(rng), lon(rng)}, c[2] = {lat(rng), lon(rng)};
    const double ab = geodesic_km(a[0], a[1], b[0], b[1]);
    CHECK(ab == doctest::Approx(geodesic_km(b[0], b[1], a[0], a[1])).epsilon(1e-12));
    CHECK(ab > 0.0);
    CHECK(ab <= geodesic_km(a[0], a[1], c[0], c[1]) + geodesic_km(c[0], c[1], b[0], b[1]) + 1e-9);
  }
}
