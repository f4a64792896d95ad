#include <cmath>
#include <limits>

#include "internal.hpp"

namespace stratus::plan {
namespace detail {

void raise(const char* code, const std::string& message, Position pos) {
  throw PlanError(Diagnostic{code, message, pos.line, pos.col});
}

Context::Context(const Environment& e, const Budget& budget)
    : env(e),
      budget_(budget),
      deadline_(std::chrono::steady_clock::now() + std::chrono::milliseconds(budget.max_wall_ms)) {}

void Context::charge(std::uint64_t n, Position pos) {
  steps += n;
  if (steps > budget_.max_steps)
    raise("budget_exceeded", "step budget of " + std::to_string(budget_.max_steps) + " exhausted", pos);
  check_clock(pos);
}

void Context::check_clock(Position pos) const {
  if (std::chrono::steady_clock::now() > deadline_)
    raise("timeout", "wall-clock budget of " + std::to_string(budget_.max_wall_ms) + " ms exhausted", pos);
}

double number(const Value& v, Position pos, const std::string& what) {
  if (v.is<std::int64_t>()) return static_cast<double>(v.as<std::int64_t>());
  if (v.is<Real>()) return v.as<Real>().value;
  if (v.is<Hours>()) return v.as<Hours>().value;
  raise("type_error", what + " expects a number, got " + v.type_name(), pos);
}

namespace {

bool is_numeric(const Value& v) { return v.is<std::int64_t>() || v.is<Real>() || v.is<Hours>(); }

const std::string& units_of(const Value& v) {
  static const std::string none;
  return v.is<Real>() ? v.as<Real>().units : none;
}

bool is_comparison(const std::string& op) {
  return op == "<" || op == "<=" || op == ">" || op == ">=" || op == "==" || op == "!=";
}

bool compare(const std::string& op, double a, double b) {
  if (op == "<") return a < b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == ">=") return a >= b;
  if (op == "==") return a == b;
  return a != b;
}

std::string additive_units(const std::string& a, const std::string& b, const std::string& op, Position pos) {
  if (a == b || b.empty()) return a;
  if (a.empty()) return b;
  raise("type_error", "incompatible units '" + a + "' and '" + b + "' for " + op, pos);
}

std::string product_units(const std::string& a, const std::string& b, bool divide) {
  if (!divide) return a.empty() ? b : b.empty() ? a : a + " " + b;
  if (a == b) return "";
  if (b.empty()) return a;
  return (a.empty() ? "1" : a) + "/" + b;
}

double arith(const std::string& op, double a, double b, Position pos) {
  double r;
  if (op == "+") r = a + b;
  else if (op == "-") r = a - b;
  else if (op == "*") r = a * b;
  else {
    if (b == 0.0) raise("arithmetic_error", "division by zero", pos);
    r = a / b;
  }
  if (!std::isfinite(r)) raise("arithmetic_error", "result of " + op + " is not finite", pos);
  return r;
}

Value integer_op(const std::string& op, std::int64_t a, std::int64_t b, Position pos) {
  std::int64_t r = 0;
  bool overflow = false;
  if (op == "+") overflow = __builtin_add_overflow(a, b, &r);
  else if (op == "-") overflow = __builtin_sub_overflow(a, b, &r);
  else if (op == "*") overflow = __builtin_mul_overflow(a, b, &r);
  else return Real{arith(op, static_cast<double>(a), static_cast<double>(b), pos), ""};
  if (overflow) raise("arithmetic_error", "integer overflow in " + op, pos);
  return r;
}

Value hours_op(const std::string& op, const Value& a, const Value& b, Position pos) {
  const bool ha = a.is<Hours>(), hb = b.is<Hours>();
  const double x = number(a, pos, op), y = number(b, pos, op);
  if (!units_of(a).empty() || !units_of(b).empty())
    raise("type_error", "cannot combine hours with a quantity carrying units", pos);
  if (op == "+" || op == "-") {
    if (!ha && op == "-") raise("type_error", "cannot subtract hours from a plain number", pos);
    return Hours{arith(op, x, y, pos)};
  }
  if (op == "*") {
    if (ha && hb) raise("type_error", "cannot multiply hours by hours", pos);
    return Hours{arith(op, x, y, pos)};
  }
  if (ha && hb) return Real{arith(op, x, y, pos), ""};
  if (!ha) raise("type_error", "cannot divide a plain number by hours", pos);
  return Hours{arith(op, x, y, pos)};
}

Value scalar_op(const std::string& op, const Value& a, const Value& b, Position pos) {
  if (is_comparison(op)) {
    if ((a.is<Hours>() || b.is<Hours>()) && (!units_of(a).empty() || !units_of(b).empty()))
      raise("type_error", "cannot compare hours with a quantity carrying units", pos);
    additive_units(units_of(a), units_of(b), op, pos);
    return compare(op, number(a, pos, op), number(b, pos, op));
  }
  if (a.is<std::int64_t>() && b.is<std::int64_t>())
    return integer_op(op, a.as<std::int64_t>(), b.as<std::int64_t>(), pos);
  if (a.is<Hours>() || b.is<Hours>()) return hours_op(op, a, b, pos);
  const double x = number(a, pos, op), y = number(b, pos, op);
  const std::string& ua = units_of(a);
  const std::string& ub = units_of(b);
  std::string units = op == "+" || op == "-" ? additive_units(ua, ub, op, pos)
                                             : product_units(ua, ub, op == "/");
  return Real{arith(op, x, y, pos), units};
}

struct Operand {
  std::shared_ptr<const FieldData> field;
  double scalar = 0.0;
  std::string units;
};

Operand operand(const Value& v, const std::string& op, Position pos) {
  if (v.is<std::shared_ptr<const FieldData>>()) {
    const auto& f = v.as<std::shared_ptr<const FieldData>>();
    return {f, 0.0, f->units};
  }
  if (v.is<std::int64_t>() || v.is<Real>()) return {nullptr, number(v, pos, op), units_of(v)};
  if (v.is<bool>()) return {nullptr, v.as<bool>() ? 1.0 : 0.0, ""};
  raise("type_error", std::string("cannot apply ") + op + " to a field and " + v.type_name(), pos);
}

bool space_reduced(const FieldData& f) { return f.cells.size() == 1 && f.cells[0] < 0; }

Value field_op(Context& ctx, const std::string& op, const Value& va, const Value& vb, Position pos) {
  const Operand a = operand(va, op, pos), b = operand(vb, op, pos);
  const bool logical = op == "and" || op == "or";
  std::string units;
  if (is_comparison(op)) additive_units(a.units, b.units, op, pos);
  else if (op == "+" || op == "-") units = additive_units(a.units, b.units, op, pos);
  else if (op == "*" || op == "/") units = product_units(a.units, b.units, op == "/");

  const FieldData& shape = a.field ? *a.field : *b.field;
  auto out = std::make_shared<FieldData>();
  out->variable = shape.variable;
  out->units = logical || is_comparison(op) ? "" : units;
  out->spec = shape.spec;
  out->start_epoch_s = shape.start_epoch_s;
  out->n_times = shape.n_times;
  out->cells = shape.cells;
  if (a.field && b.field) {
    const FieldData& fa = *a.field;
    const FieldData& fb = *b.field;
    if (fa.n_times != fb.n_times && fa.n_times != 1 && fb.n_times != 1)
      raise("type_error", "fields have incompatible time lengths " + std::to_string(fa.n_times) + " and " +
                              std::to_string(fb.n_times), pos);
    if (fa.cells != fb.cells && !space_reduced(fa) && !space_reduced(fb))
      raise("type_error", "fields cover different cells; use apply() to align them", pos);
    const FieldData& longer = fa.n_times >= fb.n_times ? fa : fb;
    out->n_times = longer.n_times;
    out->start_epoch_s = longer.start_epoch_s;
    out->cells = space_reduced(fa) ? fb.cells : fa.cells;
    if (fa.variable != fb.variable) out->variable = fa.variable + op + fb.variable;
  }
  const std::size_t T = out->n_times, C = out->cells.size();
  ctx.charge_elements(T * C, pos);
  auto pick = [&](const Operand& o, std::size_t t, std::size_t k) {
    if (!o.field) return o.scalar;
    const FieldData& f = *o.field;
    return f.at(f.n_times == 1 ? 0 : t, f.cells.size() == 1 ? 0 : k);
  };
  out->values.resize(T * C);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < C; ++k) {
      const double x = pick(a, t, k), y = pick(b, t, k);
      double r;
      if (op == "and") r = (x != 0.0 && y != 0.0) ? 1.0 : 0.0;
      else if (op == "or") r = (x != 0.0 || y != 0.0) ? 1.0 : 0.0;
      else if (is_comparison(op)) r = compare(op, x, y) ? 1.0 : 0.0;
      else r = arith(op, x, y, pos);
      out->values[t * C + k] = r;
    }
  }
  return std::shared_ptr<const FieldData>(std::move(out));
}

}  // namespace

Value binary_op(Context& ctx, const std::string& op, const Value& a, const Value& b, Position pos) {
  const bool fa = a.is<std::shared_ptr<const FieldData>>(), fb = b.is<std::shared_ptr<const FieldData>>();
  if (fa || fb) return field_op(ctx, op, a, b, pos);
  if (op == "and" || op == "or") {
    if (!a.is<bool>() || !b.is<bool>())
      raise("type_error", op + " expects booleans, got " + a.type_name() + " and " + b.type_name(), pos);
    return op == "and" ? (a.as<bool>() && b.as<bool>()) : (a.as<bool>() || b.as<bool>());
  }
  if (is_numeric(a) && is_numeric(b)) return scalar_op(op, a, b, pos);
  if (op == "==") return a == b;
  if (op == "!=") return !(a == b);
  if (a.is<std::string>() && b.is<std::string>()) {
    const auto& x = a.as<std::string>();
    const auto& y = b.as<std::string>();
    if (op == "+") return x + y;
    if (op == "<") return x < y;
    if (op == "<=") return x <= y;
    if (op == ">") return x > y;
    if (op == ">=") return x >= y;
  }
  raise("type_error", "cannot apply " + op + " to " + a.type_name() + " and " + b.type_name(), pos);
}

Value unary_op(Context& ctx, const std::string& op, const Value& a, Position pos) {
  if (a.is<std::shared_ptr<const FieldData>>()) {
    const auto& f = *a.as<std::shared_ptr<const FieldData>>();
    auto out = std::make_shared<FieldData>(f);
    ctx.charge_elements(f.values.size(), pos);
    for (double& v : out->values) v = op == "-" ? -v : (v == 0.0 ? 1.0 : 0.0);
    if (op == "not") out->units.clear();
    return std::shared_ptr<const FieldData>(std::move(out));
  }
  if (op == "not") {
    if (!a.is<bool>()) raise("type_error", std::string("not expects a boolean, got ") + a.type_name(), pos);
    return !a.as<bool>();
  }
  if (a.is<std::int64_t>()) {
    if (a.as<std::int64_t>() == std::numeric_limits<std::int64_t>::min())
      raise("arithmetic_error", "integer overflow in unary -", pos);
    return -a.as<std::int64_t>();
  }
  if (a.is<Real>()) return Real{-a.as<Real>().value, a.as<Real>().units};
  if (a.is<Hours>()) return Hours{-a.as<Hours>().value};
  raise("type_error", std::string("cannot negate ") + a.type_name(), pos);
}

}  // namespace detail

namespace {

using detail::Context;

class Evaluator {
 public:
  Evaluator(Context& ctx) : ctx_(ctx), scope_(ctx.env.bindings) {}

  void bind(const Binding& b) { scope_[b.name] = eval(*b.value); }

  Value eval(const Expr& e) {
    ctx_.charge(1, e.pos);
    switch (e.kind) {
      case Expr::Kind::integer: return e.int_value;
      case Expr::Kind::real: return Real{e.real_value, ""};
      case Expr::Kind::string: return e.text;
      case Expr::Kind::boolean: return e.bool_value;
      case Expr::Kind::variable: {
        auto it = scope_.find(e.text);
        if (it == scope_.end()) detail::raise("unknown_identifier", "unbound identifier '" + e.text + "'", e.pos);
        return it->second;
      }
      case Expr::Kind::list: {
        List items;
        items.reserve(e.args.size());
        for (const auto& a : e.args) items.push_back(eval(*a));
        return Value::list(std::move(items));
      }
      case Expr::Kind::unary: return detail::unary_op(ctx_, e.text, eval(*e.args[0]), e.pos);
      case Expr::Kind::binary: {
        Value lhs = eval(*e.args[0]);
        if (lhs.is<bool>() && (e.text == "and" || e.text == "or")) {
          if (e.text == "and" && !lhs.as<bool>()) return false;
          if (e.text == "or" && lhs.as<bool>()) return true;
        }
        return detail::binary_op(ctx_, e.text, lhs, eval(*e.args[1]), e.pos);
      }
      case Expr::Kind::call: return call(e);
    }
    detail::raise("type_error", "malformed expression", e.pos);
  }

 private:
  Value call(const Expr& e) {
    const BuiltinInfo* info = find_builtin(e.text);
    detail::BuiltinFn fn = detail::builtin_impl(e.text);
    if (!info || !fn) detail::raise("unknown_identifier", "unknown function '" + e.text + "'", e.pos);
    std::vector<Value> args;
    args.reserve(e.args.size());
    for (const auto& a : e.args) args.push_back(eval(*a));
    ctx_.check_clock(e.pos);
    try {
      Value v = fn(ctx_, args, e.pos);
      ctx_.check_clock(e.pos);
      return v;
    } catch (const PlanError&) {
      throw;
    } catch (const Error& err) {
      detail::raise(info->tools.empty() ? "value_error" : "tool_error",
                    e.text + ": " + err.what() + " [" + err.code() + "]", e.pos);
    }
  }

  Context& ctx_;
  std::map<std::string, Value> scope_;
};

}  // namespace

EvalResult evaluate(const ToolProgram& program, const Environment& env, const Budget& budget) {
  Context ctx(env, budget);
  Evaluator ev(ctx);
  for (const auto& b : program.lets) ev.bind(b);
  EvalResult r;
  r.value = ev.eval(*program.result);
  r.stdout_text = std::move(ctx.out);
  r.steps = ctx.steps;
  return r;
}

}  // namespace stratus::plan
