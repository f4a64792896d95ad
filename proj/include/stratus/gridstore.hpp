#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stratus/error.hpp"

namespace stratus::grid {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Regular latitude/longitude grid with a fixed time step. The canonical grid
/// (make_grid) is 121 x 240 points at 1.5 degrees; sub-windows of it are used
/// for small test problems.
struct GridSpec {
  std::vector<double> lat_points;
  std::vector<double> lon_points;
  int step_hours = 6;

  std::size_t n_lat() const { return lat_points.size(); }
  std::size_t n_lon() const { return lon_points.size(); }
  std::size_t n_cells() const { return lat_points.size() * lon_points.size(); }
  std::size_t cell(std::size_t i, std::size_t j) const { return i * n_lon() + j; }

  double lat_step() const;
  double lon_step() const;
  /// True when the longitudes close the full circle (wrap-around neighbours).
  bool periodic_lon() const;
  bool is_canonical() const;

  /// Index of the grid row/column whose center is closest to the coordinate.
  /// Longitudes are wrapped into [0, 360) first.
  std::size_t nearest_lat(double lat) const;
  std::size_t nearest_lon(double lon) const;

  /// Throws Error{"invalid_grid"} unless the points are strictly increasing,
  /// evenly spaced and inside [-90, 90] x [0, 360).
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

GridSpec make_grid();

/// Window of the canonical grid: rows [lat_begin, lat_begin + n_lat) and
/// columns [lon_begin, lon_begin + n_lon).
GridSpec make_subgrid(std::size_t lat_begin, std::size_t lon_begin, std::size_t n_lat,
                      std::size_t n_lon);

/// Nonnegative per-cell weights on a grid, row-major [lat][lon], summing to 1.
struct WeightField {
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * n_lon + j]; }
};

/// Spherical band-area weights. Each row covers [lat - d/2, lat + d/2] clipped
/// to the poles, split evenly over the longitudes, normalized to sum 1.
WeightField area_weights(const GridSpec& spec);

/// Surface area of one cell in row `i`, km^2, on the sphere of radius
/// kEarthRadiusKm.
double cell_area_km2(const GridSpec& spec, std::size_t i);

/// Time step to elapsed hours: index * step_hours.
double time_offset_hours(std::int64_t answer_index, int step_hours = 6);

// ---------------------------------------------------------------------------
// Variables

struct VariableInfo {
  std::string name;
  std::string alias;
  std::string units;
  std::string description;
  double min_value;
  double max_value;
};

/// The fixed 9-entry registry (4 surface, 5 single-level atmospheric).
const std::vector<VariableInfo>& variable_registry();

/// Canonical registry name for a name or short alias ("t2m" -> "temperature_2m").
/// Throws Error{"unknown_variable"}.
const VariableInfo& lookup_variable(const std::string& name_or_alias);

// ---------------------------------------------------------------------------
// Datasets

/// Labeled [time][lat][lon] arrays per variable. Storage is shared between a
/// dataset and its time slices, so a GridDataset is cheap to copy and must be
/// treated as immutable once variables are added.
class GridDataset {
 public:
  GridDataset() = default;
  GridDataset(GridSpec spec, std::int64_t start_epoch_s, std::size_t n_times);

  /// Adds a variable. `values` must hold n_times * n_lat * n_lon finite
  /// numbers. Throws Error{"dimension_mismatch"} / Error{"nan_payload"}.
  void add_variable(const std::string& name, const std::string& units,
                    std::vector<double> values);

  const GridSpec& spec() const { return spec_; }
  std::size_t n_times() const { return n_times_; }
  std::int64_t start_epoch_s() const { return start_epoch_s_; }
  std::string start_time() const;

  bool has_variable(const std::string& name) const;
  std::vector<std::string> variable_names() const;
  const std::string& units(const std::string& name) const;

  /// One time step of a variable as a row-major lat x lon view.
  std::span<const double> slice(const std::string& name, std::size_t t) const;
  double at(const std::string& name, std::size_t t, std::size_t i, std::size_t j) const;

  /// Zero-copy view of steps [t0, t1). The start time moves forward accordingly.
  GridDataset slice_time(std::size_t t0, std::size_t t1) const;

  bool operator==(const GridDataset& other) const;

 private:
  struct Variable {
    std::string units;
    std::shared_ptr<const std::vector<double>> data;
  };
  const Variable& variable(const std::string& name) const;

  GridSpec spec_;
  std::int64_t start_epoch_s_ = 0;
  std::size_t n_times_ = 0;
  std::size_t t_offset_ = 0;
  std::map<std::string, Variable> variables_;
};

using DatasetPtr = std::shared_ptr<const GridDataset>;

/// Per-variable population standard deviation over an entire dataset.
class VariableStats {
 public:
  static VariableStats compute(const GridDataset& ds);

  /// Accepts canonical names or aliases. Throws Error{"unknown_variable"}.
  double sigma(const std::string& name) const;
  const std::map<std::string, double>& all() const { return sigma_; }

 private:
  std::map<std::string, double> sigma_;
};

/// Deterministic smooth synthetic fields: low-order spherical harmonics
/// drifting in time, a diurnal cycle and hashed per-cell noise, clamped to the
/// registry range and quantized to float32 precision.
GridDataset synth_dataset(std::uint64_t seed, const std::vector<std::string>& variables,
                          std::size_t n_times, const GridSpec& spec = make_grid(),
                          std::int64_t start_epoch_s = 1577836800 /* 2020-01-01T00Z */);

// ---------------------------------------------------------------------------
// .zgrid container

void save_dataset(const GridDataset& ds, const std::filesystem::path& path);
GridDataset load_dataset(const std::filesystem::path& path);

/// In-memory variants of the same format.
std::string encode_dataset(const GridDataset& ds);
GridDataset decode_dataset(std::string_view bytes);

// ---------------------------------------------------------------------------
// UTC timestamps ("2020-01-01T00:00:00Z")

std::string format_iso8601(std::int64_t epoch_s);
/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS][Z]". Throws Error{"bad_timestamp"}.
std::int64_t parse_iso8601(const std::string& text);

}  // namespace stratus::grid
