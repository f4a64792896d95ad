#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratus/gridstore.hpp"

namespace stratus::geo {

enum class FeatureKind { country, continent, ocean, other };

const char* to_string(FeatureKind kind);
/// Throws Error{"bad_feature"} for anything outside the four kinds.
FeatureKind parse_kind(const std::string& text);

/// (lon, lat) vertices in degrees, lon in [0, 360], first == last.
using Ring = std::vector<std::pair<double, double>>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

struct GeoFeature {
  std::string id;
  std::string name;
  FeatureKind kind = FeatureKind::other;
  std::vector<Polygon> polygons;
  std::optional<std::string> parent;
  /// Planar area in square degrees; orders overlapping features of one kind.
  double area_deg2 = 0.0;

  bool contains(double lat, double lon) const;
};

/// Boolean containment per grid cell, decided at cell centers.
struct RegionMask {
  std::string feature_id;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<std::uint8_t> cells;

  std::vector<std::size_t> support() const;
};

/// Area-weighted mask normalized to a probability distribution.
struct RegionDistribution {
  std::string feature_id;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<double> mass;
};

/// Polygon catalog bound to one grid. Immutable after construction.
class GeoIndex {
 public:
  /// Parses a GeoJSON FeatureCollection whose features carry
  /// properties {id, name, kind, parent}. Longitudes in [-180, 180) are moved
  /// into [0, 360) and rings crossing the 0/360 seam are split.
  static GeoIndex from_geojson(const std::string& text, const grid::GridSpec& spec = grid::make_grid());
  static GeoIndex load(const std::filesystem::path& path, const grid::GridSpec& spec = grid::make_grid());

  const grid::GridSpec& spec() const { return spec_; }
  const grid::WeightField& weights() const { return weights_; }
  const std::vector<GeoFeature>& features() const { return features_; }

  /// Throws Error{"unknown_feature"}.
  const GeoFeature& feature(const std::string& id) const;
  const GeoFeature* find_by_normalized_name(const std::string& normalized) const;
  /// Feature indices whose polygons contain the cell center.
  const std::vector<std::uint32_t>& features_at(std::size_t cell) const { return cell_cache_[cell]; }
  /// Grid cells contained in the feature, ascending.
  const std::vector<std::size_t>& cells_of(const std::string& id) const;
  std::vector<std::string> names() const;

 private:
  grid::GridSpec spec_;
  grid::WeightField weights_;
  std::vector<GeoFeature> features_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> name_index_;
  std::vector<std::vector<std::uint32_t>> cell_cache_;
  std::vector<std::vector<std::size_t>> feature_cells_;
};

/// Exact normalized-name hit, else token-sort fuzzy match at `threshold`.
/// Throws Error{"no_match"}.
const GeoFeature& geocode(const GeoIndex& index, const std::string& name,
                          double threshold = 0.85);

/// Features containing the grid cell nearest to (lat, lon), ordered
/// country, continent, ocean, other; ties by ascending polygon area.
/// Throws Error{"out_of_range"}.
std::vector<const GeoFeature*> reverse_geocode(const GeoIndex& index, double lat, double lon);

/// Throws Error{"empty_region"} when the feature covers no cell center.
RegionMask region_mask(const GeoIndex& index, const std::string& feature_id);
RegionDistribution region_distribution(const GeoIndex& index, const std::string& feature_id,
                                       const grid::WeightField& weights);
RegionDistribution region_distribution(const GeoIndex& index, const std::string& feature_id);

/// Every feature whose parent chain reaches `feature_id`, sorted by name.
std::vector<const GeoFeature*> sublocations(const GeoIndex& index, const std::string& feature_id);

/// Haversine distance on a sphere of radius 6371.0 km.
double geodesic_km(double lat1, double lon1, double lat2, double lon2);

/// Great-circle distance between the centers of two cells of `spec`.
double cell_distance_km(const grid::GridSpec& spec, std::size_t cell_a, std::size_t cell_b);

}  // namespace stratus::geo
