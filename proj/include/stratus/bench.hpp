#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stratus/catalog.hpp"
#include "stratus/chat.hpp"
#include "stratus/evalkit.hpp"

namespace stratus::bench {

inline constexpr const char* kSchema = "zbench/1";

enum class Difficulty { easy, medium, hard };

const char* to_string(Difficulty d);
/// Throws Error{"bad_difficulty"}.
Difficulty parse_difficulty(const std::string& text);

/// Typed ground truth. Which fields are meaningful depends on `kind`:
/// numeric uses value/units/sigma, hours uses value, location uses name,
/// location_list uses names, boolean uses boolean, description uses
/// reference_text and reference_claims.
struct AnswerSpec {
  eval::AnswerKind kind = eval::AnswerKind::numeric;
  double value = 0.0;
  std::string units;
  double sigma = 0.0;
  std::string name;
  std::vector<std::string> names;
  bool boolean = false;
  std::string reference_text;
  std::vector<std::string> reference_claims;

  nlohmann::json to_json() const;
  /// Throws Error{"schema_error"}.
  static AnswerSpec from_json(const nlohmann::json& j);
  bool operator==(const AnswerSpec&) const = default;
};

/// A checkable statement: `stat` (mean, max, min) of `variable` over
/// `region` during the 24 h from `timestamp` is above/below `threshold`.
struct ClaimCheck {
  std::string variable;
  std::string region;
  std::string stat = "mean";
  std::string comparison = "above";
  double threshold = 0.0;
  bool operator==(const ClaimCheck&) const = default;
};

struct Claim {
  std::string text;
  std::string timestamp;
  bool negated = false;
  /// The positive statement a negated claim was derived from.
  std::string original;
  std::string source;
  ClaimCheck check;

  nlohmann::json to_json() const;
  static Claim from_json(const nlohmann::json& j);
  bool operator==(const Claim&) const = default;
};

struct TaskInstance {
  std::string instance_id;
  int template_id = 0;
  std::string question;
  /// Placeholder values plus the numeric parameters the oracle reads.
  nlohmann::json bindings = nlohmann::json::object();
  /// Catalog refs attached, in order, to the agent's program environment.
  std::vector<std::string> dataset_refs;
  AnswerSpec truth;
  std::string metric;
  eval::Rule rule = eval::Rule::sae;
  Difficulty difficulty = Difficulty::easy;
  /// A toolplan program computing the truth, when one exists.
  std::string reference_program;
  std::optional<Claim> claim;

  nlohmann::json to_json() const;
  /// Throws Error{"schema_error"}.
  static TaskInstance from_json(const nlohmann::json& j);
  bool operator==(const TaskInstance&) const = default;
};

struct TaskTemplate {
  int id = 0;
  std::string pattern;
  Difficulty difficulty = Difficulty::easy;
  eval::AnswerKind kind = eval::AnswerKind::numeric;
  eval::Rule rule = eval::Rule::sae;
  std::string metric;
  std::vector<std::string> placeholders;
};

/// Implemented templates in id order.
const std::vector<TaskTemplate>& templates();
/// Throws Error{"unknown_template"}.
const TaskTemplate& find_template(int id);

struct BenchConfig {
  /// Anomaly task: per-cell reference quantiles and the share of a
  /// feature's cells that must fall outside them.
  double anomaly_low_q = 0.05;
  double anomaly_high_q = 0.95;
  double anomaly_fraction = 0.25;
  std::string baseline = "baseline";
  std::string simulator = "advdiff";
  /// Simulator setting used by the counterfactual task.
  double sim_alpha = 0.5;
};

using Oracle = std::function<AnswerSpec(const nlohmann::json& bindings, const catalog::Catalog& cat,
                                        const BenchConfig& cfg)>;

/// Throws Error{"unknown_template"}.
const Oracle& oracle_lookup(int template_id);

/// Samples placeholders and computes the truth. Deterministic in
/// (template, seed, catalog). Throws Error{"sampler_exhausted"} when the
/// catalog offers nothing to sample (for example no feature on the grid).
TaskInstance instantiate(const TaskTemplate& tmpl, std::uint64_t seed, const catalog::Catalog& cat,
                         const BenchConfig& cfg = {});

/// `per_template` instances of every template, seeds derived from the master seed.
std::vector<TaskInstance> generate_bench(std::uint64_t master_seed, const catalog::Catalog& cat, int per_template = 12,
                                         const BenchConfig& cfg = {});

// ---------------------------------------------------------------------------
// Claim pipeline

struct Report {
  std::string source;
  /// First line is an ISO-8601 timestamp, the rest free text.
  std::string text;
};

/// Reads every *.txt file of a directory, sorted by file name.
std::vector<Report> load_reports(const std::filesystem::path& dir);

struct ClaimTasks {
  std::vector<TaskInstance> instances;
  /// One line per skipped claim or report.
  std::vector<std::string> skipped;
};

/// Extracts claims from each report through `judge`, pairs them with the
/// 24 h primary-dataset slice at their timestamp, negates each through the
/// judge and emits one boolean instance per claim and per negated twin.
ClaimTasks build_claim_tasks(const std::vector<Report>& reports, chat::ChatClient& judge,
                             const catalog::Catalog& cat);

/// Truth of a claim check on a dataset (normally the 24 h slice).
bool evaluate_check(const ClaimCheck& check, const grid::GridDataset& ds, const geo::GeoIndex& index);

// ---------------------------------------------------------------------------
// zbench/1 files

/// A non-null manifest is written first as a {"type": "manifest"} line.
void export_bench(const std::vector<TaskInstance>& instances, const std::filesystem::path& path,
                  const nlohmann::json& manifest = nullptr);
/// Manifest lines are skipped. Throws Error{"schema_error"} naming the 1-based line.
std::vector<TaskInstance> import_bench(const std::filesystem::path& path);
std::vector<TaskInstance> parse_bench(const std::string& text);

}  // namespace stratus::bench
