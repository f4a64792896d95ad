#include "stratus/textmatch.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <spdlog/spdlog.h>

namespace stratus::text {

std::string normalize(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

double indel_ratio(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  // Single-row LCS table.
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return 2.0 * static_cast<double>(row[b.size()]) / static_cast<double>(a.size() + b.size());
}

namespace {

std::string sorted_tokens(std::string_view s) {
  std::istringstream in(normalize(s));
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  std::sort(tokens.begin(), tokens.end());
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

}  // namespace

double token_sort_ratio(std::string_view a, std::string_view b) {
  return indel_ratio(sorted_tokens(a), sorted_tokens(b));
}

std::optional<Match> best_match(std::string_view query, const std::vector<std::string>& candidates,
                                double threshold) {
  std::optional<Match> best;
  bool tied = false;
  for (const auto& c : candidates) {
    const double score = token_sort_ratio(query, c);
    if (score < threshold) continue;
    if (!best || score > best->score) {
      best = Match{c, score};
      tied = false;
    } else if (score == best->score) {
      tied = true;
      if (c < best->candidate) best->candidate = c;
    }
  }
  if (tied)
    spdlog::info("fuzzy match tie for '{}' at score {:.4f}; chose '{}'", query, best->score,
                 best->candidate);
  return best;
}

}  // namespace stratus::text
