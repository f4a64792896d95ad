#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stratus::text {

/// Lowercases ASCII, turns every non-alphanumeric byte into a separator and
/// collapses runs of separators into one space.
std::string normalize(std::string_view s);

/// Normalized Indel similarity 2*LCS(a,b)/(|a|+|b|) in [0,1]; 1 for two empty strings.
double indel_ratio(std::string_view a, std::string_view b);

/// indel_ratio over normalized inputs whose tokens are sorted alphabetically.
double token_sort_ratio(std::string_view a, std::string_view b);

struct Match {
  std::string candidate;
  double score;
};

/// Best candidate by token_sort_ratio with score >= threshold. Equal scores
/// resolve to the lexicographically smallest candidate.
std::optional<Match> best_match(std::string_view query, const std::vector<std::string>& candidates,
                                double threshold);

inline constexpr double kDefaultMatchThreshold = 0.85;

}  // namespace stratus::text
