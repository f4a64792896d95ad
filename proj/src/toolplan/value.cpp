#include <charconv>
#include <cmath>

#include "stratus/toolplan.hpp"

namespace stratus::plan {

namespace {

std::string six_digits(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, p);
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

std::string render(const Value& v, bool nested) {
  return std::visit(
      [&](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, Real>) {
          return x.units.empty() ? six_digits(x.value) : six_digits(x.value) + " " + x.units;
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return nested ? quoted(x) : x;
        } else if constexpr (std::is_same_v<T, Hours>) {
          return six_digits(x.value) + " h";
        } else if constexpr (std::is_same_v<T, LatLon>) {
          return "(" + six_digits(x.lat) + ", " + six_digits(x.lon) + ")";
        } else if constexpr (std::is_same_v<T, FeatureRef>) {
          return nested ? quoted(x.name) : x.name;
        } else if constexpr (std::is_same_v<T, std::shared_ptr<const List>>) {
          std::string out = "[";
          for (std::size_t k = 0; k < x->size(); ++k) {
            if (k) out += ", ";
            out += render((*x)[k], true);
          }
          return out + "]";
        } else if constexpr (std::is_same_v<T, std::shared_ptr<const FieldData>>) {
          double sum = 0.0;
          for (double d : x->values) sum += d;
          const double mean = x->values.empty() ? 0.0 : sum / static_cast<double>(x->values.size());
          std::string cells = x->cells.size() == 1 && x->cells[0] < 0 ? "space-reduced"
                                                                       : std::to_string(x->cells.size()) + " cells";
          return "<field " + x->variable + " " + std::to_string(x->n_times) + " steps x " + cells +
                 ", mean " + six_digits(mean) + (x->units.empty() ? "" : " " + x->units) + ">";
        } else if constexpr (std::is_same_v<T, std::shared_ptr<const MaskData>>) {
          return "<mask " + x->label + ", " + std::to_string(x->cells.size()) + " cells>";
        } else {
          return "<dataset " + x->start_time() + ", " + std::to_string(x->n_times()) + " steps, " +
                 std::to_string(x->variable_names().size()) + " variables>";
        }
      },
      v.data);
}

}  // namespace

const char* Value::type_name() const {
  static constexpr const char* names[] = {"integer", "real",    "boolean", "text",  "hours", "latlon",
                                          "feature", "list",    "field",   "mask",  "dataset"};
  return names[data.index()];
}

bool Value::operator==(const Value& other) const {
  if (data.index() != other.data.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(other.data);
        if constexpr (std::is_same_v<T, std::shared_ptr<const List>> ||
                      std::is_same_v<T, std::shared_ptr<const FieldData>> ||
                      std::is_same_v<T, std::shared_ptr<const MaskData>> ||
                      std::is_same_v<T, grid::DatasetPtr>) {
          return x == y || (x && y && *x == *y);
        } else {
          return x == y;
        }
      },
      data);
}

std::string format_value(const Value& v) { return render(v, false); }

}  // namespace stratus::plan
