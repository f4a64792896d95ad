#include "stratus/geolocator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stratus/textmatch.hpp"

namespace stratus::geo {

namespace {

using Point = std::pair<double, double>;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

int kind_rank(FeatureKind k) { return static_cast<int>(k); }

// Crossing-number test; a point on a shared edge belongs to exactly one side.
bool ring_crosses(const Ring& ring, double x, double y) {
  bool inside = false;
  for (std::size_t a = 0, b = ring.size() - 1; a < ring.size(); b = a++) {
    const auto [xa, ya] = ring[a];
    const auto [xb, yb] = ring[b];
    if ((ya > y) != (yb > y)) {
      const double x_cross = (xb - xa) * (y - ya) / (yb - ya) + xa;
      if (x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double shoelace(const Ring& ring) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < ring.size(); ++k)
    s += ring[k].first * ring[k + 1].second - ring[k + 1].first * ring[k].second;
  return std::abs(s) / 2.0;
}

double orient(const Point& p, const Point& q, const Point& r) {
  return (q.first - p.first) * (r.second - p.second) - (q.second - p.second) * (r.first - p.first);
}

bool on_segment(const Point& p, const Point& q, const Point& r) {
  return std::min(p.first, r.first) <= q.first && q.first <= std::max(p.first, r.first) &&
         std::min(p.second, r.second) <= q.second && q.second <= std::max(p.second, r.second);
}

bool segments_intersect(const Point& p1, const Point& p2, const Point& p3, const Point& p4) {
  const double d1 = orient(p3, p4, p1), d2 = orient(p3, p4, p2);
  const double d3 = orient(p1, p2, p3), d4 = orient(p1, p2, p4);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(p3, p1, p4)) return true;
  if (d2 == 0 && on_segment(p3, p2, p4)) return true;
  if (d3 == 0 && on_segment(p1, p3, p2)) return true;
  if (d4 == 0 && on_segment(p1, p4, p2)) return true;
  return false;
}

bool self_intersects(const Ring& ring) {
  const std::size_t n = ring.size() - 1;  // edges
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const bool adjacent = b == a + 1 || (a == 0 && b == n - 1);
      if (adjacent) continue;
      if (segments_intersect(ring[a], ring[a + 1], ring[b], ring[b + 1])) return true;
    }
  return false;
}

// Sutherland-Hodgman against the half-plane x <= bound (keep_left) or x >= bound.
Ring clip_vertical(const Ring& ring, double bound, bool keep_left) {
  auto inside = [&](const Point& p) { return keep_left ? p.first <= bound : p.first >= bound; };
  Ring out;
  for (std::size_t k = 0; k + 1 < ring.size(); ++k) {
    const Point& cur = ring[k];
    const Point& nxt = ring[k + 1];
    const bool ci = inside(cur), ni = inside(nxt);
    if (ci) out.push_back(cur);
    if (ci != ni) {
      const double t = (bound - cur.first) / (nxt.first - cur.first);
      out.push_back({bound, cur.second + t * (nxt.second - cur.second)});
    }
  }
  if (!out.empty()) out.push_back(out.front());
  return out;
}

[[noreturn]] void load_error(const std::string& code, const std::string& id, const std::string& what) {
  throw Error(code, "feature '" + id + "': " + what);
}

Ring read_ring(const nlohmann::json& coords, const std::string& id) {
  Ring ring;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2) load_error("bad_geometry", id, "coordinate is not [lon, lat]");
    ring.emplace_back(c[0].get<double>(), c[1].get<double>());
  }
  if (ring.size() < 4) load_error("bad_geometry", id, "ring needs at least 4 positions");
  if (ring.front() != ring.back()) load_error("unclosed_ring", id, "ring is not closed");
  for (const auto& [lon, lat] : ring)
    if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 360.0)
      load_error("bad_geometry", id, "coordinate out of range");
  if (self_intersects(ring)) load_error("self_intersection", id, "ring intersects itself");
  return ring;
}

// Maps longitudes into [0, 360]; a ring that crosses the seam comes back as
// two rings, one on each side.
// Rings already written in [0, 360] (including full-circle bands from 0 to
// 360) are taken as-is; only [-180, 180) input can cross the seam.
std::vector<Ring> split_at_seam(Ring ring) {
  bool signed_lons = false;
  for (auto& p : ring)
    if (p.first < 0.0) {
      p.first += 360.0;
      signed_lons = true;
    }
  if (!signed_lons) return {ring};
  bool crosses = false;
  for (std::size_t k = 0; k + 1 < ring.size(); ++k)
    if (std::abs(ring[k + 1].first - ring[k].first) > 180.0) crosses = true;
  if (!crosses) return {ring};

  for (std::size_t k = 1; k < ring.size(); ++k) {
    while (ring[k].first - ring[k - 1].first > 180.0) ring[k].first -= 360.0;
    while (ring[k - 1].first - ring[k].first > 180.0) ring[k].first += 360.0;
  }
  double min_x = 1e300;
  for (const auto& p : ring) min_x = std::min(min_x, p.first);
  if (min_x < 0.0)
    for (auto& p : ring) p.first += 360.0;

  std::vector<Ring> parts;
  Ring west = clip_vertical(ring, 360.0, true);
  Ring east = clip_vertical(ring, 360.0, false);
  for (auto& p : east) p.first -= 360.0;
  if (west.size() >= 4) parts.push_back(std::move(west));
  if (east.size() >= 4) parts.push_back(std::move(east));
  return parts;
}

std::vector<Polygon> read_polygon(const nlohmann::json& rings, const std::string& id) {
  if (!rings.is_array() || rings.empty()) load_error("bad_geometry", id, "polygon has no rings");
  std::vector<Polygon> out;
  for (auto& outer : split_at_seam(read_ring(rings[0], id))) out.push_back(Polygon{outer, {}});
  for (std::size_t h = 1; h < rings.size(); ++h) {
    auto pieces = split_at_seam(read_ring(rings[h], id));
    if (pieces.size() != 1 || out.size() != 1)
      load_error("bad_geometry", id, "holes crossing the 0/360 seam are not supported");
    out.front().holes.push_back(std::move(pieces.front()));
  }
  return out;
}

}  // namespace

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::country: return "country";
    case FeatureKind::continent: return "continent";
    case FeatureKind::ocean: return "ocean";
    case FeatureKind::other: return "other";
  }
  return "other";
}

FeatureKind parse_kind(const std::string& text) {
  if (text == "country") return FeatureKind::country;
  if (text == "continent") return FeatureKind::continent;
  if (text == "ocean") return FeatureKind::ocean;
  if (text == "other") return FeatureKind::other;
  throw Error("bad_feature", "unknown feature kind '" + text + "'");
}

bool GeoFeature::contains(double lat, double lon) const {
  for (const auto& poly : polygons) {
    if (!ring_crosses(poly.outer, lon, lat)) continue;
    bool in_hole = false;
    for (const auto& hole : poly.holes) in_hole = in_hole || ring_crosses(hole, lon, lat);
    if (!in_hole) return true;
  }
  return false;
}

std::vector<std::size_t> RegionMask::support() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < cells.size(); ++k)
    if (cells[k]) out.push_back(k);
  return out;
}

GeoIndex GeoIndex::from_geojson(const std::string& text, const grid::GridSpec& spec) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_geojson", std::string("GeoJSON parse error: ") + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
    throw Error("bad_geojson", "expected a GeoJSON FeatureCollection");

  spec.validate();
  GeoIndex index;
  index.spec_ = spec;
  index.weights_ = grid::area_weights(spec);

  std::set<std::pair<int, std::string>> names_by_kind;
  for (const auto& f : doc["features"]) {
    const auto& props = f.value("properties", nlohmann::json::object());
    GeoFeature feat;
    try {
      feat.id = props.at("id").get<std::string>();
      feat.name = props.at("name").get<std::string>();
      feat.kind = parse_kind(props.at("kind").get<std::string>());
      if (props.contains("parent") && !props["parent"].is_null())
        feat.parent = props["parent"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("bad_feature", std::string("feature properties: ") + e.what());
    }
    if (index.by_id_.count(feat.id)) throw Error("duplicate_id", "duplicate feature id '" + feat.id + "'");
    if (!names_by_kind.insert({kind_rank(feat.kind), text::normalize(feat.name)}).second)
      throw Error("duplicate_name", "duplicate " + std::string(to_string(feat.kind)) + " name '" +
                                        feat.name + "'");

    const auto& geom = f.at("geometry");
    const std::string type = geom.value("type", "");
    if (type == "Polygon") {
      feat.polygons = read_polygon(geom.at("coordinates"), feat.id);
    } else if (type == "MultiPolygon") {
      for (const auto& p : geom.at("coordinates"))
        for (auto& part : read_polygon(p, feat.id)) feat.polygons.push_back(std::move(part));
    } else {
      load_error("bad_geometry", feat.id, "unsupported geometry type '" + type + "'");
    }
    for (const auto& p : feat.polygons) {
      feat.area_deg2 += shoelace(p.outer);
      for (const auto& h : p.holes) feat.area_deg2 -= shoelace(h);
    }
    index.by_id_[feat.id] = index.features_.size();
    index.features_.push_back(std::move(feat));
  }

  for (const auto& f : index.features_)
    if (f.parent && !index.by_id_.count(*f.parent))
      throw Error("unknown_parent", "feature '" + f.id + "' has unknown parent '" + *f.parent + "'");

  // Name index: on a name shared across kinds the lower kind rank wins.
  for (std::size_t k = 0; k < index.features_.size(); ++k) {
    const auto key = text::normalize(index.features_[k].name);
    auto it = index.name_index_.find(key);
    if (it == index.name_index_.end() ||
        kind_rank(index.features_[k].kind) < kind_rank(index.features_[it->second].kind))
      index.name_index_[key] = k;
  }

  index.cell_cache_.assign(spec.n_cells(), {});
  index.feature_cells_.assign(index.features_.size(), {});
  for (std::size_t k = 0; k < index.features_.size(); ++k) {
    const auto& feat = index.features_[k];
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& p : feat.polygons)
      for (const auto& [x, y] : p.outer) {
        lo_x = std::min(lo_x, x);
        hi_x = std::max(hi_x, x);
        lo_y = std::min(lo_y, y);
        hi_y = std::max(hi_y, y);
      }
    for (std::size_t i = 0; i < spec.n_lat(); ++i) {
      const double lat = spec.lat_points[i];
      if (lat < lo_y || lat > hi_y) continue;
      for (std::size_t j = 0; j < spec.n_lon(); ++j) {
        const double lon = spec.lon_points[j];
        if (lon < lo_x || lon > hi_x) continue;
        if (feat.contains(lat, lon)) {
          index.cell_cache_[spec.cell(i, j)].push_back(static_cast<std::uint32_t>(k));
          index.feature_cells_[k].push_back(spec.cell(i, j));
        }
      }
    }
  }
  for (auto& cell : index.feature_cells_) std::sort(cell.begin(), cell.end());
  return index;
}

GeoIndex GeoIndex::load(const std::filesystem::path& path, const grid::GridSpec& spec) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_geojson(buf.str(), spec);
}

const GeoFeature& GeoIndex::feature(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("unknown_feature", "unknown feature id '" + id + "'");
  return features_[it->second];
}

const GeoFeature* GeoIndex::find_by_normalized_name(const std::string& normalized) const {
  auto it = name_index_.find(normalized);
  return it == name_index_.end() ? nullptr : &features_[it->second];
}

const std::vector<std::size_t>& GeoIndex::cells_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("unknown_feature", "unknown feature id '" + id + "'");
  return feature_cells_[it->second];
}

std::vector<std::string> GeoIndex::names() const {
  std::vector<std::string> out;
  for (const auto& f : features_) out.push_back(f.name);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const GeoFeature& geocode(const GeoIndex& index, const std::string& name, double threshold) {
  if (text::normalize(name).empty()) throw Error("no_match", "empty place name");
  if (const auto* hit = index.find_by_normalized_name(text::normalize(name))) return *hit;
  if (auto m = text::best_match(name, index.names(), threshold))
    return *index.find_by_normalized_name(text::normalize(m->candidate));
  throw Error("no_match", "no feature matches '" + name + "'");
}

std::vector<const GeoFeature*> reverse_geocode(const GeoIndex& index, double lat, double lon) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= 0.0 && lon < 360.0))
    throw Error("out_of_range", "coordinate (" + std::to_string(lat) + ", " + std::to_string(lon) +
                                    ") outside lat [-90, 90], lon [0, 360)");
  const auto& spec = index.spec();
  const std::size_t cell = spec.cell(spec.nearest_lat(lat), spec.nearest_lon(lon));
  std::vector<const GeoFeature*> out;
  for (auto k : index.features_at(cell)) out.push_back(&index.features()[k]);
  std::sort(out.begin(), out.end(), [](const GeoFeature* a, const GeoFeature* b) {
    if (a->kind != b->kind) return kind_rank(a->kind) < kind_rank(b->kind);
    if (a->area_deg2 != b->area_deg2) return a->area_deg2 < b->area_deg2;
    return a->name < b->name;
  });
  return out;
}

RegionMask region_mask(const GeoIndex& index, const std::string& feature_id) {
  const auto& cells = index.cells_of(feature_id);
  if (cells.empty())
    throw Error("empty_region", "feature '" + feature_id + "' covers no grid cell center");
  RegionMask m{feature_id, index.spec().n_lat(), index.spec().n_lon(),
               std::vector<std::uint8_t>(index.spec().n_cells(), 0)};
  for (auto c : cells) m.cells[c] = 1;
  return m;
}

RegionDistribution region_distribution(const GeoIndex& index, const std::string& feature_id,
                                       const grid::WeightField& weights) {
  const RegionMask mask = region_mask(index, feature_id);
  if (weights.values.size() != mask.cells.size())
    throw Error("dimension_mismatch", "weight field does not match the index grid");
  RegionDistribution d{feature_id, mask.n_lat, mask.n_lon, std::vector<double>(mask.cells.size(), 0.0)};
  double total = 0.0;
  for (std::size_t k = 0; k < mask.cells.size(); ++k)
    if (mask.cells[k]) total += weights.values[k];
  for (std::size_t k = 0; k < mask.cells.size(); ++k)
    if (mask.cells[k]) d.mass[k] = weights.values[k] / total;
  return d;
}

RegionDistribution region_distribution(const GeoIndex& index, const std::string& feature_id) {
  return region_distribution(index, feature_id, index.weights());
}

std::vector<const GeoFeature*> sublocations(const GeoIndex& index, const std::string& feature_id) {
  index.feature(feature_id);  // existence check
  std::vector<const GeoFeature*> out;
  for (const auto& f : index.features()) {
    std::optional<std::string> p = f.parent;
    for (std::size_t hops = 0; p && hops <= index.features().size(); ++hops) {
      if (*p == feature_id) {
        out.push_back(&f);
        break;
      }
      p = index.feature(*p).parent;
    }
  }
  std::sort(out.begin(), out.end(),
            [](const GeoFeature* a, const GeoFeature* b) { return a->name < b->name; });
  return out;
}

double geodesic_km(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = deg2rad(lat1), p2 = deg2rad(lat2);
  const double dp = p2 - p1;
  const double dl = deg2rad(lon2 - lon1);
  const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * grid::kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double cell_distance_km(const grid::GridSpec& spec, std::size_t cell_a, std::size_t cell_b) {
  const std::size_t n = spec.n_lon();
  return geodesic_km(spec.lat_points[cell_a / n], spec.lon_points[cell_a % n],
                     spec.lat_points[cell_b / n], spec.lon_points[cell_b % n]);
}

}  // namespace stratus::geo
