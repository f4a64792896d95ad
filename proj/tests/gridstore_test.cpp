#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "stratus/gridstore.hpp"

using namespace stratus;
using namespace stratus::grid;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("stratus_" + name);
}

}  // namespace

TEST_CASE("canonical grid matches the 1.5 degree layout") {
  const GridSpec g = make_grid();
  REQUIRE(g.n_lat() == 121);
  REQUIRE(g.n_lon() == 240);
  CHECK(g.lat_points.front() == -90.0);
  CHECK(g.lat_points[120] == 90.0);
  CHECK(g.lon_points.front() == 0.0);
  CHECK(g.lon_points.back() == 358.5);
  CHECK(g.step_hours == 6);
  CHECK(g.periodic_lon());
  CHECK(make_grid() == g);
}

TEST_CASE("nearest grid indices wrap longitude") {
  const GridSpec g = make_grid();
  CHECK(g.nearest_lat(12.0) == 68);  // 12.0 is exactly -90 + 68*1.5
  CHECK(g.nearest_lon(30.0) == 20);
  CHECK(g.nearest_lon(359.9) == 0);
  CHECK(g.nearest_lon(-1.5) == 239);
}

TEST_CASE("area weights") {
  const GridSpec g = make_grid();
  const WeightField w = area_weights(g);
  double total = 0.0;
  for (double v : w.values) total += v;
  CHECK(std::abs(total - 1.0) < 1e-12);

  double equator_row = 0.0, pole_row = 0.0;
  for (std::size_t j = 0; j < g.n_lon(); ++j) {
    equator_row += w.at(60, j);
    pole_row += w.at(120, j);
    CHECK(w.at(33, j) == w.at(33, 0));
  }
  CHECK(equator_row > pole_row);

  // Pole row: band [89.25, 90] => (1 - sin 89.25deg) / (2 * 240) per cell.
  const double expected_pole = (1.0 - std::sin(89.25 * std::numbers::pi / 180.0)) / 480.0;
  CHECK(w.at(120, 0) > 0.0);
  CHECK(w.at(0, 17) == doctest::Approx(expected_pole).epsilon(1e-12));

  SUBCASE("sub-grid weights are normalized and longitude-uniform") {
    const GridSpec sub = make_subgrid(70, 10, 8, 8);
    const WeightField ws = area_weights(sub);
    double s = 0.0;
    for (double v : ws.values) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 1; j < 8; ++j) CHECK(ws.at(i, j) == ws.at(i, 0));
  }
}

TEST_CASE("cell areas add up to the sphere") {
  const GridSpec g = make_grid();
  double total = 0.0;
  for (std::size_t i = 0; i < g.n_lat(); ++i) total += cell_area_km2(g, i) * g.n_lon();
  CHECK(total == doctest::Approx(4.0 * std::numbers::pi * kEarthRadiusKm * kEarthRadiusKm).epsilon(1e-12));
}

TEST_CASE("time_offset_hours") {
  CHECK(time_offset_hours(5) == 30.0);
  CHECK(time_offset_hours(0) == 0.0);
  CHECK(time_offset_hours(28) == 168.0);
  CHECK_THROWS_AS(time_offset_hours(-1), Error);
}

TEST_CASE("variable registry") {
  CHECK(variable_registry().size() == 9);
  CHECK(lookup_variable("t2m").name == "temperature_2m");
  CHECK(lookup_variable("geopotential_500").units == "m2 s-2");
  CHECK_THROWS_WITH_AS(lookup_variable("vorticity"), "unknown variable 'vorticity'", Error);
}

TEST_CASE("synth_dataset") {
  const GridSpec g = make_grid();
  const GridDataset a = synth_dataset(7, {"t2m"}, 4);
  const GridDataset b = synth_dataset(7, {"t2m"}, 4);
  const GridDataset c = synth_dataset(8, {"t2m"}, 4);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  REQUIRE(a.n_times() == 4);
  REQUIRE(a.has_variable("temperature_2m"));
  CHECK(a.has_variable("t2m"));

  for (std::size_t t = 0; t < a.n_times(); ++t)
    for (double v : a.slice("temperature_2m", t)) {
      CHECK(v >= 180.0);
      CHECK(v <= 340.0);
    }
  CHECK_THROWS_AS(synth_dataset(7, {"not_a_variable"}, 2), Error);

  SUBCASE("sub-grid window reproduces the full-grid values") {
    const GridSpec sub = make_subgrid(60, 100, 8, 8);
    const GridDataset s = synth_dataset(7, {"t2m"}, 4, sub);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
          CHECK(s.at("t2m", t, i, j) == a.at("t2m", t, 60 + i, 100 + j));
  }
}

TEST_CASE("every registry variable has positive spread") {
  std::vector<std::string> names;
  for (const auto& v : variable_registry()) names.push_back(v.name);
  const GridDataset ds = synth_dataset(11, names, 3);
  const VariableStats stats = VariableStats::compute(ds);
  CHECK(stats.all().size() == 9);
  for (const auto& [name, sigma] : stats.all()) CHECK(sigma > 0.0);
  for (const auto& info : variable_registry())
    for (std::size_t t = 0; t < ds.n_times(); ++t)
      for (double v : ds.slice(info.name, t)) {
        REQUIRE(v >= info.min_value);
        REQUIRE(v <= info.max_value);
      }
}

TEST_CASE("time slices are views with shifted start") {
  const GridDataset ds = synth_dataset(3, {"t2m", "msl"}, 6);
  const GridDataset view = ds.slice_time(2, 5);
  CHECK(view.n_times() == 3);
  CHECK(view.start_epoch_s() == ds.start_epoch_s() + 2 * 6 * 3600);
  CHECK(view.at("msl", 0, 10, 10) == ds.at("msl", 2, 10, 10));
  CHECK_THROWS_AS(ds.slice_time(4, 7), Error);
}

TEST_CASE(".zgrid round trip") {
  const auto path = temp_file("roundtrip.zgrid");
  const GridDataset ds = synth_dataset(21, {"t2m", "u10", "z500"}, 3);
  save_dataset(ds, path);
  const GridDataset back = load_dataset(path);
  CHECK(back == ds);

  SUBCASE("time slice round trips too") {
    const GridDataset view = ds.slice_time(1, 3);
    CHECK(decode_dataset(encode_dataset(view)) == view);
  }

  SUBCASE("file layout starts with magic and a length-prefixed JSON header") {
    const std::string bytes = encode_dataset(ds);
    CHECK(bytes.substr(0, 8) == std::string("ZGRID\0\0\1", 8));
    const std::uint32_t len = static_cast<unsigned char>(bytes[8]) |
                              static_cast<unsigned char>(bytes[9]) << 8 |
                              static_cast<unsigned char>(bytes[10]) << 16 |
                              static_cast<unsigned char>(bytes[11]) << 24;
    CHECK(bytes[12] == '{');
    CHECK(bytes.size() == 12 + len + 3 * 3 * 121 * 240 * 4);
  }
  std::filesystem::remove(path);
}

TEST_CASE(".zgrid corruption") {
  const GridDataset ds = synth_dataset(5, {"t2m", "msl"}, 2);
  const std::string bytes = encode_dataset(ds);

  auto code_of = [](const std::string& b) {
    try {
      decode_dataset(b);
    } catch (const Error& e) {
      return e.code();
    }
    return std::string("none");
  };

  CHECK(code_of(bytes.substr(0, bytes.size() - 10)) == "payload_short");
  CHECK_THROWS_WITH_AS(decode_dataset(bytes.substr(0, bytes.size() - 10)),
                       doctest::Contains("payload short"), Error);
  CHECK(code_of(bytes + "xxxx") == "payload_long");
  CHECK(code_of("JUNK" + bytes) == "bad_magic");
  CHECK(code_of(bytes.substr(0, 20)) == "malformed_header");

  SUBCASE("header declares fewer variables than the payload holds") {
    GridDataset one(ds.spec(), ds.start_epoch_s(), ds.n_times());
    std::vector<double> vals(ds.slice("t2m", 0).begin(), ds.slice("t2m", 0).end());
    vals.insert(vals.end(), ds.slice("t2m", 1).begin(), ds.slice("t2m", 1).end());
    one.add_variable("temperature_2m", "K", vals);
    std::string enc = encode_dataset(one);
    const std::string full = encode_dataset(ds);
    // Append the second variable block of the two-variable file.
    enc += full.substr(full.size() - ds.n_times() * ds.spec().n_cells() * 4);
    CHECK(code_of(enc) == "payload_long");
  }

  SUBCASE("NaN in payload") {
    std::string bad = bytes;
    const std::size_t at = bad.size() - 4;
    const char nan_bits[4] = {0, 0, static_cast<char>(0xC0), 0x7F};
    bad.replace(at, 4, nan_bits, 4);
    CHECK(code_of(bad) == "nan_payload");
  }

  SUBCASE("shape disagreeing with the grid") {
    std::string bad = bytes;
    const auto pos = bad.find("[2,121,240]");
    REQUIRE(pos != std::string::npos);
    bad.replace(pos, 11, "[2,120,240]");
    CHECK(code_of(bad) == "dimension_mismatch");
  }
}

TEST_CASE("timestamps") {
  CHECK(format_iso8601(0) == "1970-01-01T00:00:00Z");
  CHECK(parse_iso8601("2020-01-01T00:00:00Z") == 1577836800);
  CHECK(parse_iso8601("2020-01-02") == 1577836800 + 86400);
  CHECK_THROWS_AS(parse_iso8601("yesterday"), Error);
}
