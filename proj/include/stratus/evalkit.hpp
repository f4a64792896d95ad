#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stratus/geolocator.hpp"
#include "stratus/gridstore.hpp"

namespace stratus::chat {
class ChatClient;
}

namespace stratus::eval {

inline constexpr double kSaeThreshold = 0.05;
inline constexpr double kRelativeThreshold = 0.05;
inline constexpr double kEmdThresholdKm = 100.0;
inline constexpr double kDiscussionThreshold = 0.5;
inline constexpr std::size_t kEmdSupport = 256;

// ---------------------------------------------------------------------------
// Numeric metrics

/// |pred - truth| / sigma. Throws Error{"bad_sigma"} for sigma <= 0.
double sae(double pred, double truth, double sigma);

/// Linear interpolation between order statistics at h = (n - 1) q.
/// Throws Error{"empty_input"} / Error{"bad_quantile"}.
std::vector<double> quantiles(std::vector<double> values, const std::vector<double>& qs);

double hours_abs_error(double pred_h, double truth_h);

/// |pred - truth| / |truth|, or |pred| when truth is zero.
double relative_error(double pred, double truth);

// ---------------------------------------------------------------------------
// Locations

/// "alias = canonical" lines; '#' comments. Keys compare normalized.
class AliasTable {
 public:
  static AliasTable parse(const std::string& text);
  static AliasTable load(const std::filesystem::path& path);
  std::optional<std::string> lookup(const std::string& name) const;
  std::size_t size() const { return map_.size(); }

 private:
  std::map<std::string, std::string> map_;
};

/// Alias table first, then the geolocator's exact and fuzzy name matching.
std::optional<std::string> match_location(const std::string& extracted, const geo::GeoIndex& index,
                                          const AliasTable& aliases, double threshold = 0.85);

/// Exact optimal transport cost between two mass vectors under a dense cost
/// matrix (row-major, supply.size() x demand.size()). Both sides must sum to
/// the same total.
double transport_cost(const std::vector<double>& supply, const std::vector<double>& demand,
                      const std::vector<double>& cost);

/// Successive-shortest-path solver for the same problem. Slower; used as
/// the fallback when the simplex pivot guard trips, and as a cross-check.
double transport_cost_ssp(const std::vector<double>& supply, const std::vector<double>& demand,
                          const std::vector<double>& cost);

/// Earth mover's distance in km between two distributions on `spec`, with
/// great-circle ground cost. Each support is cut to its `k` heaviest cells
/// (ties to the lower index) and renormalized first.
/// Throws Error{"empty_support"} / Error{"grid_mismatch"}.
double location_emd(const geo::RegionDistribution& pred, const geo::RegionDistribution& ref,
                    const grid::GridSpec& spec, std::size_t k = kEmdSupport);

/// Normalized area-weighted union of the named features' cells; names that
/// do not resolve are returned in `unmatched`.
struct UnionDistribution {
  geo::RegionDistribution dist;
  std::vector<std::string> matched;
  std::vector<std::string> unmatched;
};
UnionDistribution union_distribution(const std::vector<std::string>& names, const geo::GeoIndex& index,
                                     const AliasTable& aliases);

struct ExtremeScore {
  bool predicted = false;
  bool occurred = false;
  /// 0 when both lists are empty; infinity when exactly one side has mass.
  double emd_km = 0.0;
};
ExtremeScore extreme_scores(const std::vector<std::string>& pred, const std::vector<std::string>& ref,
                            const geo::GeoIndex& index, const AliasTable& aliases);

/// F1 of the binary "event predicted" vs "event occurred" over a batch. A
/// batch without positive predictions or occurrences scores 1 when every
/// item agrees.
double occurrence_f1(const std::vector<ExtremeScore>& batch);

// ---------------------------------------------------------------------------
// Discussion

struct LabelProbs {
  double p_supported = 0.0;
  double p_refuted = 0.0;
  double p_neutral = 1.0;

  static LabelProbs from_logits(double supported, double refuted, double neutral);
  /// Throws Error{"bad_probs"} unless each is in [0, 1] and they sum to 1 within 1e-9.
  void validate() const;
};

struct DiscussionScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::size_t> s;  // non-neutral model claims
  std::size_t n = 0;           // reference claims
};

/// S = model claims with p_neutral < 0.5; precision = sum_S p_sup / (sum_S p_sup + sum_S p_ref);
/// recall = mean reference p_sup. Empty S or N scores 0.
DiscussionScore discussion_scores(const std::vector<LabelProbs>& model_claims,
                                  const std::vector<LabelProbs>& ref_claims);

/// Classifies a claim against a body of text.
class ClaimJudge {
 public:
  virtual ~ClaimJudge() = default;
  virtual LabelProbs classify(const std::string& claim, const std::string& evidence) const = 0;
};

/// Deterministic stand-in judge: token overlap with the best-matching
/// evidence sentence and a negation-parity check. Test use only; it is not a
/// faithful replacement for a model judge.
class OverlapJudge final : public ClaimJudge {
 public:
  LabelProbs classify(const std::string& claim, const std::string& evidence) const override;
};

/// Sentence split on '.', '!', '?' and newlines; empty pieces dropped.
std::vector<std::string> split_claims(const std::string& text);

/// Model claims judged against the reference text (precision side) and
/// reference claims judged against the model text (recall side).
DiscussionScore score_description(const std::string& model_text, const std::string& reference_text,
                                  const ClaimJudge& judge);

// ---------------------------------------------------------------------------
// Extraction

enum class AnswerKind { numeric, hours, location, location_list, boolean, description };

const char* to_string(AnswerKind kind);
/// Throws Error{"bad_kind"}.
AnswerKind parse_answer_kind(const std::string& text);

struct ExtractedAnswer {
  bool valid = false;
  std::string reason;  // set when invalid: no_answer, no_number, no_boolean
  AnswerKind kind = AnswerKind::numeric;
  double number = 0.0;
  std::string units;
  std::string text;
  std::vector<std::string> items;
  bool boolean = false;
};

/// Body of the first <solution> block if present, else the whole response.
std::string answer_body(const std::string& response);

/// Rule-based two-stage extraction (validity, then typed parse). With a
/// judge, the judge's JSON {"valid": bool, "answer": text} replaces stage 1
/// and narrows the text given to stage 2.
ExtractedAnswer verify_extract(const std::string& question, const std::string& response, AnswerKind kind,
                               chat::ChatClient* judge = nullptr);

// ---------------------------------------------------------------------------
// Correctness

enum class Rule { sae, relative, location, emd, boolean, discussion, hours };

const char* to_string(Rule rule);
/// Throws Error{"bad_rule"}.
Rule parse_rule(const std::string& text);

/// Strict thresholds: sae < 0.05, relative < 0.05, emd < 100 km,
/// discussion f1 > 0.5, hours error == 0. location/boolean take 1 for a
/// match and 0 otherwise.
bool correctness(Rule rule, double metric_value);

}  // namespace stratus::eval
