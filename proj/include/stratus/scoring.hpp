#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stratus/bench.hpp"
#include "stratus/evalkit.hpp"

namespace stratus::scoring {

/// What an agent run produced for one instance.
struct Answer {
  std::string text;
  std::string outcome;  // solved, budget_exhausted, protocol_violation
};

struct Row {
  std::string instance_id;
  int template_id = 0;
  bench::Difficulty difficulty = bench::Difficulty::easy;
  eval::Rule rule = eval::Rule::sae;
  eval::AnswerKind kind = eval::AnswerKind::numeric;
  std::string outcome;  // "missing" when no transcript answered it
  bool valid = false;
  std::string reason;  // why the answer was invalid
  /// Absent for invalid answers; may be +inf for EMD with one empty side.
  std::optional<double> metric;
  bool correct = false;
  /// Extreme-event flags, location-list rows only.
  bool predicted = false;
  bool occurred = false;
};

struct Context {
  const geo::GeoIndex* geo = nullptr;
  eval::AliasTable aliases;
  /// Optional model judge for answer extraction.
  chat::ChatClient* judge = nullptr;
  /// Claim judge for description answers.
  const eval::ClaimJudge* claim_judge = nullptr;
};

/// Scores one instance. A missing or empty answer is invalid and incorrect.
Row score(const bench::TaskInstance& inst, const std::optional<Answer>& answer, const Context& ctx);

std::vector<Row> score_all(const std::vector<bench::TaskInstance>& bench, const std::map<std::string, Answer>& answers,
                           const Context& ctx);

/// Per-instance rows, one header line, LF line ends.
std::string to_csv(const std::vector<Row>& rows);

/// Totals, rates by difficulty and by template with metric quantiles
/// (q05, q25, q50, q75, q95 over finite metrics), outcome counts and the
/// extreme-event occurrence F1. Contains no timings. `manifest` is copied
/// verbatim when not null.
nlohmann::json summary(const std::vector<Row>& rows, const nlohmann::json& manifest = nullptr);

/// Correctness by difficulty {easy, medium, hard} plus an "all" row, as CSV
/// with columns difficulty,n,correct,rate.
std::string difficulty_table(const nlohmann::json& summary);
/// Correctness by template, CSV with columns template_id,difficulty,rule,n,correct,rate,metric_q50.
std::string template_table(const nlohmann::json& summary);

}  // namespace stratus::scoring
