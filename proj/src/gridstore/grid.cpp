#include <cmath>
#include <cstdio>
#include <ctime>
#include <numbers>

#include "stratus/gridstore.hpp"

namespace stratus::grid {

namespace {

constexpr double kCanonicalStep = 1.5;
constexpr std::size_t kCanonicalLat = 121;
constexpr std::size_t kCanonicalLon = 240;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

double wrap_lon(double lon) {
  double w = std::fmod(lon, 360.0);
  if (w < 0) w += 360.0;
  return w;
}

}  // namespace

double GridSpec::lat_step() const {
  return lat_points.size() > 1 ? lat_points[1] - lat_points[0] : kCanonicalStep;
}

double GridSpec::lon_step() const {
  return lon_points.size() > 1 ? lon_points[1] - lon_points[0] : kCanonicalStep;
}

bool GridSpec::periodic_lon() const {
  return !lon_points.empty() &&
         std::abs(static_cast<double>(lon_points.size()) * lon_step() - 360.0) < 1e-9;
}

bool GridSpec::is_canonical() const { return *this == make_grid(); }

std::size_t GridSpec::nearest_lat(double lat) const {
  std::size_t best = 0;
  double best_d = std::abs(lat_points[0] - lat);
  for (std::size_t i = 1; i < lat_points.size(); ++i) {
    double d = std::abs(lat_points[i] - lat);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

std::size_t GridSpec::nearest_lon(double lon) const {
  const double w = wrap_lon(lon);
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t j = 0; j < lon_points.size(); ++j) {
    double d = std::abs(lon_points[j] - w);
    if (periodic_lon()) d = std::min(d, 360.0 - d);
    if (d < best_d) {
      best = j;
      best_d = d;
    }
  }
  return best;
}

void GridSpec::validate() const {
  auto check_axis = [](const std::vector<double>& pts, double lo, double hi, const char* axis) {
    if (pts.empty()) throw Error("invalid_grid", std::string(axis) + " axis is empty");
    const double step = pts.size() > 1 ? pts[1] - pts[0] : 1.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (!std::isfinite(pts[k]) || pts[k] < lo || pts[k] > hi)
        throw Error("invalid_grid", std::string(axis) + " point out of range");
      if (k > 0 && (pts[k] <= pts[k - 1] || std::abs((pts[k] - pts[k - 1]) - step) > 1e-9))
        throw Error("invalid_grid", std::string(axis) + " points not evenly increasing");
    }
  };
  check_axis(lat_points, -90.0, 90.0, "latitude");
  check_axis(lon_points, 0.0, 360.0 - 1e-12, "longitude");
  if (step_hours <= 0) throw Error("invalid_grid", "step_hours must be positive");
}

GridSpec make_grid() {
  GridSpec g;
  g.lat_points.reserve(kCanonicalLat);
  for (std::size_t i = 0; i < kCanonicalLat; ++i)
    g.lat_points.push_back(-90.0 + kCanonicalStep * static_cast<double>(i));
  g.lon_points.reserve(kCanonicalLon);
  for (std::size_t j = 0; j < kCanonicalLon; ++j)
    g.lon_points.push_back(kCanonicalStep * static_cast<double>(j));
  g.step_hours = 6;
  return g;
}

GridSpec make_subgrid(std::size_t lat_begin, std::size_t lon_begin, std::size_t n_lat,
                      std::size_t n_lon) {
  const GridSpec full = make_grid();
  if (n_lat == 0 || n_lon == 0 || lat_begin + n_lat > full.n_lat() ||
      lon_begin + n_lon > full.n_lon())
    throw Error("invalid_grid", "sub-grid window outside the canonical grid");
  GridSpec g;
  g.lat_points.assign(full.lat_points.begin() + static_cast<std::ptrdiff_t>(lat_begin),
                      full.lat_points.begin() + static_cast<std::ptrdiff_t>(lat_begin + n_lat));
  g.lon_points.assign(full.lon_points.begin() + static_cast<std::ptrdiff_t>(lon_begin),
                      full.lon_points.begin() + static_cast<std::ptrdiff_t>(lon_begin + n_lon));
  g.step_hours = full.step_hours;
  return g;
}

namespace {

// sin(upper edge) - sin(lower edge) of the row's band, clipped at the poles.
double band_extent(const GridSpec& spec, std::size_t i) {
  const double half = spec.lat_step() / 2.0;
  const double lat = spec.lat_points[i];
  const double hi = std::min(90.0, lat + half);
  const double lo = std::max(-90.0, lat - half);
  return std::sin(deg2rad(hi)) - std::sin(deg2rad(lo));
}

}  // namespace

WeightField area_weights(const GridSpec& spec) {
  WeightField w;
  w.n_lat = spec.n_lat();
  w.n_lon = spec.n_lon();
  w.values.resize(spec.n_cells());
  double total = 0.0;
  for (std::size_t i = 0; i < w.n_lat; ++i) total += band_extent(spec, i) * static_cast<double>(w.n_lon);
  for (std::size_t i = 0; i < w.n_lat; ++i) {
    const double v = band_extent(spec, i) / total;
    for (std::size_t j = 0; j < w.n_lon; ++j) w.values[i * w.n_lon + j] = v;
  }
  return w;
}

double cell_area_km2(const GridSpec& spec, std::size_t i) {
  return kEarthRadiusKm * kEarthRadiusKm * deg2rad(spec.lon_step()) * band_extent(spec, i);
}

double time_offset_hours(std::int64_t answer_index, int step_hours) {
  if (answer_index < 0)
    throw Error("negative_index", "time index must be >= 0, got " + std::to_string(answer_index));
  return static_cast<double>(answer_index) * step_hours;
}

std::string format_iso8601(std::int64_t epoch_s) {
  const std::time_t t = static_cast<std::time_t>(epoch_s);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

std::int64_t parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int n = std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &s);
  if (n != 3 && n != 5 && n != 6)
    throw Error("bad_timestamp", "cannot parse timestamp '" + text + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
    throw Error("bad_timestamp", "timestamp field out of range in '" + text + "'");
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<std::int64_t>(timegm(&tm));
}

}  // namespace stratus::grid
