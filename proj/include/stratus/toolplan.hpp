#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "stratus/error.hpp"
#include "stratus/geolocator.hpp"
#include "stratus/gridstore.hpp"
#include "stratus/models.hpp"

namespace stratus::plan {

inline constexpr std::size_t kMaxSourceBytes = 64 * 1024;

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostic {
  std::string code;
  std::string message;
  int line = 0;
  int col = 0;

  nlohmann::json to_json() const;
};

/// Every parse and evaluation failure. code() matches diagnostic().code:
/// lex_error, syntax_error, unknown_identifier, arity_mismatch, too_large,
/// type_error, value_error, arithmetic_error, budget_exceeded, timeout,
/// tool_error.
class PlanError : public Error {
 public:
  explicit PlanError(Diagnostic d);
  const Diagnostic& diagnostic() const { return diag_; }

 private:
  Diagnostic diag_;
};

// ---------------------------------------------------------------------------
// AST

struct Position {
  int line = 1;
  int col = 1;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { integer, real, string, boolean, variable, unary, binary, call, list };

  Kind kind;
  Position pos;
  std::int64_t int_value = 0;
  double real_value = 0.0;
  bool bool_value = false;
  /// String literal, variable or callee name, or operator spelling.
  std::string text;
  /// Operands, call arguments or list items.
  std::vector<ExprPtr> args;
};

struct Binding {
  std::string name;
  ExprPtr value;
  Position pos;
};

struct ToolProgram {
  std::string source;
  std::vector<Binding> lets;
  ExprPtr result;
};

/// Parses a program. `env_names` are extra identifiers bound by the caller.
/// Throws PlanError with the offending line/column.
ToolProgram parse(std::string_view source, const std::set<std::string>& env_names = {});

/// Canonical source text; parse(pretty_print(p)) is structurally equal to p.
std::string pretty_print(const ToolProgram& program);

/// Structural equality ignoring source text and positions.
bool ast_equal(const ToolProgram& a, const ToolProgram& b);

// ---------------------------------------------------------------------------
// Builtins

/// Tool pools, in their global acquisition order.
enum class ToolKind { geolocator = 0, forecaster = 1, simulator = 2, dataset = 3 };

const char* to_string(ToolKind kind);

struct BuiltinInfo {
  std::string name;
  int min_arity;
  int max_arity;
  std::vector<ToolKind> tools;
  std::string signature;
  std::string doc;
};

const std::vector<BuiltinInfo>& builtins();
const BuiltinInfo* find_builtin(std::string_view name);

/// Tool kinds the program may touch, sorted in acquisition order.
std::vector<ToolKind> required_tools(const ToolProgram& program);

// ---------------------------------------------------------------------------
// Values

struct Real {
  double value = 0.0;
  std::string units;
  bool operator==(const Real&) const = default;
};

struct Hours {
  double value = 0.0;
  bool operator==(const Hours&) const = default;
};

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const LatLon&) const = default;
};

struct FeatureRef {
  std::string id;
  std::string name;
  bool operator==(const FeatureRef&) const = default;
};

/// Values of one variable on a set of cells over a run of time steps,
/// row-major [time][cell]. A cell index of -1 marks a spatially reduced column.
struct FieldData {
  std::string variable;
  std::string units;
  std::shared_ptr<const grid::GridSpec> spec;
  std::int64_t start_epoch_s = 0;
  std::size_t n_times = 0;
  std::vector<std::int64_t> cells;
  std::vector<double> values;

  double at(std::size_t t, std::size_t k) const { return values[t * cells.size() + k]; }
  bool operator==(const FieldData& o) const {
    return variable == o.variable && units == o.units && n_times == o.n_times &&
           cells == o.cells && values == o.values && start_epoch_s == o.start_epoch_s;
  }
};

struct MaskData {
  std::string label;
  std::shared_ptr<const grid::GridSpec> spec;
  std::vector<std::size_t> cells;
  bool operator==(const MaskData& o) const { return label == o.label && cells == o.cells; }
};

struct Value;
using List = std::vector<Value>;

struct Value {
  using Variant =
      std::variant<std::int64_t, Real, bool, std::string, Hours, LatLon, FeatureRef,
                   std::shared_ptr<const List>, std::shared_ptr<const FieldData>,
                   std::shared_ptr<const MaskData>, grid::DatasetPtr>;
  Variant data;

  Value() : data(std::int64_t{0}) {}
  template <typename T>
  Value(T v) : data(std::move(v)) {}

  static Value list(List items) { return Value(std::make_shared<const List>(std::move(items))); }

  /// "integer", "real", "boolean", "text", "hours", "latlon", "feature",
  /// "list", "field", "mask", "dataset".
  const char* type_name() const;

  template <typename T>
  bool is() const { return std::holds_alternative<T>(data); }
  template <typename T>
  const T& as() const { return std::get<T>(data); }

  bool operator==(const Value& other) const;
};

/// Canonical, locale-independent rendering: reals at 6 significant digits
/// with a units suffix, hours as "<n> h", lists bracketed with quoted text.
std::string format_value(const Value& v);

// ---------------------------------------------------------------------------
// Evaluation

struct Environment {
  std::vector<grid::DatasetPtr> datasets;
  const geo::GeoIndex* geolocator = nullptr;
  const models::Forecaster* forecaster = nullptr;
  const models::Simulator* simulator = nullptr;
  std::map<std::string, Value> bindings;
};

struct Budget {
  std::uint64_t max_steps = 1'000'000;
  std::int64_t max_wall_ms = 30'000;
};

struct EvalResult {
  Value value;
  std::string stdout_text;
  std::uint64_t steps = 0;
};

/// Runs a parsed program against injected tools. Deterministic for a fixed
/// environment. Throws PlanError (budget_exceeded, timeout, type_error,
/// tool_error, ...) positioned at the failing node.
EvalResult evaluate(const ToolProgram& program, const Environment& env, const Budget& budget = {});

/// Markdown reference for every builtin, used in agent prompts.
std::string builtin_reference();

}  // namespace stratus::plan
