#include <algorithm>
#include <cmath>

#include "stratus/gridstore.hpp"

namespace stratus::grid {

const std::vector<VariableInfo>& variable_registry() {
  static const std::vector<VariableInfo> registry = {
      {"temperature_2m", "t2m", "K", "air temperature 2 m above the surface", 180.0, 340.0},
      {"wind_u_10m", "u10", "m s-1", "eastward wind 10 m above the surface", -60.0, 60.0},
      {"wind_v_10m", "v10", "m s-1", "northward wind 10 m above the surface", -60.0, 60.0},
      {"mean_sea_level_pressure", "msl", "Pa", "air pressure reduced to mean sea level", 87000.0,
       108000.0},
      {"geopotential_500", "z500", "m2 s-2", "geopotential at the 500 hPa level", 46000.0, 60000.0},
      {"temperature_850", "t850", "K", "air temperature at the 850 hPa level", 200.0, 320.0},
      {"wind_u_500", "u500", "m s-1", "eastward wind at the 500 hPa level", -100.0, 100.0},
      {"wind_v_500", "v500", "m s-1", "northward wind at the 500 hPa level", -100.0, 100.0},
      {"specific_humidity_700", "q700", "kg kg-1", "specific humidity at the 700 hPa level", 0.0,
       0.03},
  };
  return registry;
}

const VariableInfo& lookup_variable(const std::string& name_or_alias) {
  for (const auto& v : variable_registry())
    if (v.name == name_or_alias || v.alias == name_or_alias) return v;
  throw Error("unknown_variable", "unknown variable '" + name_or_alias + "'");
}

GridDataset::GridDataset(GridSpec spec, std::int64_t start_epoch_s, std::size_t n_times)
    : spec_(std::move(spec)), start_epoch_s_(start_epoch_s), n_times_(n_times) {
  spec_.validate();
  if (n_times_ == 0) throw Error("dimension_mismatch", "dataset needs at least one time step");
}

void GridDataset::add_variable(const std::string& name, const std::string& units,
                               std::vector<double> values) {
  if (t_offset_ != 0) throw Error("immutable_view", "cannot add variables to a time slice");
  const std::size_t expected = n_times_ * spec_.n_cells();
  if (values.size() != expected)
    throw Error("dimension_mismatch", "variable '" + name + "' has " +
                                          std::to_string(values.size()) + " values, expected " +
                                          std::to_string(expected));
  for (double v : values)
    if (!std::isfinite(v)) throw Error("nan_payload", "variable '" + name + "' has non-finite values");
  variables_[name] = Variable{units, std::make_shared<const std::vector<double>>(std::move(values))};
}

std::string GridDataset::start_time() const { return format_iso8601(start_epoch_s_); }

bool GridDataset::has_variable(const std::string& name) const {
  if (variables_.count(name)) return true;
  for (const auto& v : variable_registry())
    if (v.alias == name) return variables_.count(v.name) > 0;
  return false;
}

std::vector<std::string> GridDataset::variable_names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : variables_) out.push_back(k);
  return out;
}

const GridDataset::Variable& GridDataset::variable(const std::string& name) const {
  auto it = variables_.find(name);
  if (it == variables_.end()) {
    for (const auto& v : variable_registry())
      if (v.alias == name) it = variables_.find(v.name);
  }
  if (it == variables_.end())
    throw Error("missing_variable", "dataset has no variable '" + name + "'");
  return it->second;
}

const std::string& GridDataset::units(const std::string& name) const { return variable(name).units; }

std::span<const double> GridDataset::slice(const std::string& name, std::size_t t) const {
  if (t >= n_times_)
    throw Error("time_out_of_range", "time index " + std::to_string(t) + " outside dataset of " +
                                         std::to_string(n_times_) + " steps");
  const auto& data = *variable(name).data;
  const std::size_t n = spec_.n_cells();
  return std::span<const double>(data.data() + (t + t_offset_) * n, n);
}

double GridDataset::at(const std::string& name, std::size_t t, std::size_t i, std::size_t j) const {
  return slice(name, t)[spec_.cell(i, j)];
}

GridDataset GridDataset::slice_time(std::size_t t0, std::size_t t1) const {
  if (t0 >= t1 || t1 > n_times_)
    throw Error("time_out_of_range", "bad time window [" + std::to_string(t0) + ", " +
                                         std::to_string(t1) + ") for " + std::to_string(n_times_) +
                                         " steps");
  GridDataset out = *this;
  out.t_offset_ = t_offset_ + t0;
  out.n_times_ = t1 - t0;
  out.start_epoch_s_ = start_epoch_s_ + static_cast<std::int64_t>(t0) * spec_.step_hours * 3600;
  return out;
}

bool GridDataset::operator==(const GridDataset& other) const {
  if (!(spec_ == other.spec_) || start_epoch_s_ != other.start_epoch_s_ ||
      n_times_ != other.n_times_ || variable_names() != other.variable_names())
    return false;
  for (const auto& [name, var] : variables_) {
    if (var.units != other.units(name)) return false;
    for (std::size_t t = 0; t < n_times_; ++t) {
      auto a = slice(name, t);
      auto b = other.slice(name, t);
      if (!std::equal(a.begin(), a.end(), b.begin())) return false;
    }
  }
  return true;
}

VariableStats VariableStats::compute(const GridDataset& ds) {
  VariableStats stats;
  for (const auto& name : ds.variable_names()) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < ds.n_times(); ++t)
      for (double v : ds.slice(name, t)) {
        sum += v;
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t t = 0; t < ds.n_times(); ++t)
      for (double v : ds.slice(name, t)) ss += (v - mean) * (v - mean);
    const double sigma = std::sqrt(ss / static_cast<double>(n));
    if (!(sigma > 0.0))
      throw Error("degenerate_variable", "variable '" + name + "' has zero standard deviation");
    stats.sigma_[name] = sigma;
  }
  return stats;
}

double VariableStats::sigma(const std::string& name) const {
  auto it = sigma_.find(name);
  if (it == sigma_.end()) it = sigma_.find(lookup_variable(name).name);
  if (it == sigma_.end()) throw Error("unknown_variable", "no statistics for '" + name + "'");
  return it->second;
}

}  // namespace stratus::grid
