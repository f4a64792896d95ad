#include <cmath>
#include <set>
#include <sstream>

#include "stratus/evalkit.hpp"
#include "stratus/textmatch.hpp"

namespace stratus::eval {

LabelProbs LabelProbs::from_logits(double supported, double refuted, double neutral) {
  const double top = std::max({supported, refuted, neutral});
  const double a = std::exp(supported - top), b = std::exp(refuted - top), c = std::exp(neutral - top);
  const double z = a + b + c;
  return {a / z, b / z, c / z};
}

void LabelProbs::validate() const {
  for (double p : {p_supported, p_refuted, p_neutral})
    if (!(p >= 0.0 && p <= 1.0)) throw Error("bad_probs", "label probability outside [0, 1]");
  if (std::abs(p_supported + p_refuted + p_neutral - 1.0) > 1e-9)
    throw Error("bad_probs", "label probabilities do not sum to 1");
}

DiscussionScore discussion_scores(const std::vector<LabelProbs>& model_claims,
                                  const std::vector<LabelProbs>& ref_claims) {
  DiscussionScore out;
  double sup = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < model_claims.size(); ++k) {
    model_claims[k].validate();
    if (model_claims[k].p_neutral < 0.5) {
      out.s.push_back(k);
      sup += model_claims[k].p_supported;
      ref += model_claims[k].p_refuted;
    }
  }
  if (!out.s.empty() && sup + ref > 0.0) out.precision = sup / (sup + ref);
  out.n = ref_claims.size();
  double recall_sum = 0.0;
  for (const auto& r : ref_claims) {
    r.validate();
    recall_sum += r.p_supported;
  }
  if (out.n > 0) out.recall = recall_sum / static_cast<double>(out.n);
  if (out.precision + out.recall > 0.0)
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

std::vector<std::string> split_claims(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto b = cur.find_first_not_of(" \t\r");
    if (b != std::string::npos) {
      const auto e = cur.find_last_not_of(" \t\r");
      std::string piece = cur.substr(b, e - b + 1);
      if (!text::normalize(piece).empty()) out.push_back(piece);
    }
    cur.clear();
  };
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char c = text[k];
    // A period between digits belongs to a number.
    const bool decimal = c == '.' && k > 0 && k + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[k - 1])) &&
                         std::isdigit(static_cast<unsigned char>(text[k + 1]));
    if ((c == '.' && !decimal) || c == '!' || c == '?' || c == '\n') flush();
    else cur.push_back(c);
  }
  flush();
  return out;
}

namespace {

const std::set<std::string>& negations() {
  static const std::set<std::string> words = {"not", "no", "never", "none", "without", "neither", "nor", "cannot"};
  return words;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {"the", "a",   "an",  "of",   "in",  "on",   "at",  "to",
                                              "is",  "are", "was", "were", "be",  "will", "and", "for",
                                              "by",  "with", "it", "this", "that", "over", "than", "as"};
  return words;
}

struct Bag {
  std::set<std::string> content;
  bool negated = false;
};

Bag bag_of(const std::string& sentence) {
  Bag b;
  std::istringstream in(text::normalize(sentence));
  std::string w;
  while (in >> w) {
    if (negations().count(w)) b.negated = !b.negated;
    else if (!stopwords().count(w)) b.content.insert(w);
  }
  return b;
}

}  // namespace

LabelProbs OverlapJudge::classify(const std::string& claim, const std::string& evidence) const {
  const Bag c = bag_of(claim);
  if (c.content.empty()) return {0.0, 0.0, 1.0};
  double best = 0.0;
  bool best_negated = false;
  for (const auto& sentence : split_claims(evidence)) {
    const Bag e = bag_of(sentence);
    std::size_t common = 0;
    for (const auto& w : c.content) common += e.content.count(w);
    const double overlap = static_cast<double>(common) / static_cast<double>(c.content.size());
    if (overlap > best) {
      best = overlap;
      best_negated = e.negated;
    }
  }
  if (best < 0.5) return {0.1, 0.1, 0.8};
  if (best_negated == c.negated) return {0.8, 0.1, 0.1};
  return {0.1, 0.8, 0.1};
}

DiscussionScore score_description(const std::string& model_text, const std::string& reference_text,
                                  const ClaimJudge& judge) {
  std::vector<LabelProbs> model, ref;
  for (const auto& c : split_claims(model_text)) model.push_back(judge.classify(c, reference_text));
  for (const auto& c : split_claims(reference_text)) ref.push_back(judge.classify(c, model_text));
  return discussion_scores(model, ref);
}

}  // namespace stratus::eval
