#pragma once

#include <chrono>

#include "stratus/toolplan.hpp"

namespace stratus::plan::detail {

[[noreturn]] void raise(const char* code, const std::string& message, Position pos);

class Context {
 public:
  Context(const Environment& env, const Budget& budget);

  /// One step per AST node; bulk work is charged per 1024 elements.
  void charge(std::uint64_t steps, Position pos);
  void charge_elements(std::size_t n, Position pos) { charge(1 + n / 1024, pos); }
  void check_clock(Position pos) const;
  std::chrono::steady_clock::time_point deadline() const { return deadline_; }

  const Environment& env;
  std::string out;
  std::uint64_t steps = 0;

 private:
  Budget budget_;
  std::chrono::steady_clock::time_point deadline_;
};

using BuiltinFn = Value (*)(Context&, const std::vector<Value>&, Position);
BuiltinFn builtin_impl(std::string_view name);

Value binary_op(Context& ctx, const std::string& op, const Value& a, const Value& b, Position pos);
Value unary_op(Context& ctx, const std::string& op, const Value& a, Position pos);

/// Numeric view of integer, real and hours values; type_error otherwise.
double number(const Value& v, Position pos, const std::string& what);

}  // namespace stratus::plan::detail
