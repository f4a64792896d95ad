#include "stratus/catalog.hpp"

#include <charconv>
#include <fstream>

namespace stratus::catalog {

namespace {

std::size_t parse_index(std::string_view s, const std::string& text) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || end != s.data() + s.size())
    throw Error("bad_dataset_ref", "bad step range in dataset ref '" + text + "'");
  return v;
}

}  // namespace

DatasetRef DatasetRef::parse(const std::string& text) {
  DatasetRef r;
  const auto at = text.find('@');
  r.id = text.substr(0, at);
  if (r.id.empty()) throw Error("bad_dataset_ref", "empty dataset id in '" + text + "'");
  if (at == std::string::npos) return r;
  const std::string_view range = std::string_view(text).substr(at + 1);
  const auto colon = range.find(':');
  if (colon == std::string_view::npos) throw Error("bad_dataset_ref", "expected id@t0:t1, got '" + text + "'");
  r.t0 = parse_index(range.substr(0, colon), text);
  r.t1 = parse_index(range.substr(colon + 1), text);
  if (*r.t1 <= *r.t0) throw Error("bad_dataset_ref", "empty step range in '" + text + "'");
  return r;
}

std::string DatasetRef::str() const {
  if (!t0) return id;
  return slice_ref(id, *t0, *t1);
}

std::string slice_ref(const std::string& id, std::size_t t0, std::size_t t1) {
  return id + "@" + std::to_string(t0) + ":" + std::to_string(t1);
}

grid::DatasetPtr Catalog::dataset(const std::string& id) const {
  auto it = datasets.find(id);
  if (it == datasets.end()) throw Error("unknown_dataset", "unknown dataset '" + id + "'");
  return it->second;
}

grid::DatasetPtr Catalog::resolve(const std::string& ref) const {
  const DatasetRef r = DatasetRef::parse(ref);
  auto ds = dataset(r.id);
  if (!r.t0) return ds;
  if (*r.t1 > ds->n_times())
    throw Error("bad_dataset_ref", "'" + ref + "' exceeds the " + std::to_string(ds->n_times()) + " steps of '" +
                                       r.id + "'");
  return std::make_shared<const grid::GridDataset>(ds->slice_time(*r.t0, *r.t1));
}

Catalog make_catalog(std::string version, std::map<std::string, grid::DatasetPtr> datasets,
                     std::shared_ptr<const geo::GeoIndex> geo, std::string primary) {
  Catalog c;
  c.version = std::move(version);
  c.datasets = std::move(datasets);
  c.geo = std::move(geo);
  c.primary = std::move(primary);
  c.stats = grid::VariableStats::compute(*c.dataset(c.primary));
  for (const auto& [id, ds] : c.datasets)
    if (!(ds->spec() == c.geo->spec()))
      throw Error("grid_mismatch", "dataset '" + id + "' is not on the geolocator grid");
  return c;
}

Catalog load_catalog(const nlohmann::json& manifest, const std::filesystem::path& base_dir) {
  if (!manifest.is_object() || !manifest.contains("datasets") || !manifest["datasets"].is_array())
    throw Error("bad_config", "catalog manifest needs a datasets array");
  std::map<std::string, grid::DatasetPtr> datasets;
  for (const auto& entry : manifest["datasets"]) {
    if (!entry.is_object() || !entry.contains("id") || !entry.contains("path"))
      throw Error("bad_config", "dataset entries need id and path");
    const std::string id = entry["id"].get<std::string>();
    std::filesystem::path p = entry["path"].get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!datasets.emplace(id, std::make_shared<const grid::GridDataset>(grid::load_dataset(p))).second)
      throw Error("bad_config", "duplicate dataset id '" + id + "'");
  }
  if (datasets.empty()) throw Error("bad_config", "catalog lists no datasets");
  const std::string primary = manifest.value("primary", std::string("obs"));
  if (!datasets.count(primary)) throw Error("bad_config", "primary dataset '" + primary + "' not listed");
  std::filesystem::path geojson = manifest.value("geojson", std::string("data/world.geojson"));
  if (geojson.is_relative() && !std::filesystem::exists(geojson)) geojson = base_dir / geojson;
  auto index = std::make_shared<const geo::GeoIndex>(geo::GeoIndex::load(geojson, datasets.at(primary)->spec()));
  return make_catalog(manifest.value("version", std::string("unversioned")), std::move(datasets), std::move(index),
                      primary);
}

Catalog load_catalog(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("io_error", "cannot open '" + manifest.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_config", manifest.string() + ": " + e.what());
  }
  return load_catalog(j, manifest.parent_path());
}

}  // namespace stratus::catalog
