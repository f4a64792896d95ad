#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stratus/geolocator.hpp"
#include "stratus/gridstore.hpp"

namespace stratus::catalog {

/// "obs" names a whole dataset, "obs@4:12" its steps [4, 12).
struct DatasetRef {
  std::string id;
  std::optional<std::size_t> t0;
  std::optional<std::size_t> t1;

  /// Throws Error{"bad_dataset_ref"}.
  static DatasetRef parse(const std::string& text);
  std::string str() const;
};

std::string slice_ref(const std::string& id, std::size_t t0, std::size_t t1);

/// Named immutable datasets plus the polygon index on their grid.
struct Catalog {
  std::string version;
  std::map<std::string, grid::DatasetPtr> datasets;
  std::shared_ptr<const geo::GeoIndex> geo;
  /// Standard deviations of the primary dataset.
  grid::VariableStats stats;
  std::string primary = "obs";

  /// Throws Error{"unknown_dataset"}.
  grid::DatasetPtr dataset(const std::string& id) const;
  /// Resolves a DatasetRef string, slicing when steps are given. Throws
  /// Error{"unknown_dataset"} or Error{"bad_dataset_ref"}.
  grid::DatasetPtr resolve(const std::string& ref) const;
  const grid::GridDataset& primary_dataset() const { return *dataset(primary); }
};

/// Builds a catalog in memory; stats come from `primary`.
Catalog make_catalog(std::string version, std::map<std::string, grid::DatasetPtr> datasets,
                     std::shared_ptr<const geo::GeoIndex> geo, std::string primary = "obs");

/// Manifest file: {"version", "primary", "geojson", "datasets": [{"id", "path"}]}.
/// Relative paths resolve against the manifest's directory, except geojson
/// which resolves against the working directory when the file exists there.
Catalog load_catalog(const std::filesystem::path& manifest);
Catalog load_catalog(const nlohmann::json& manifest, const std::filesystem::path& base_dir);

}  // namespace stratus::catalog
