#include "earth/scoring.hpp"

#include <cmath>
#include <string>

#include "earth/error.hpp"
#include "earth/text.hpp"

namespace earth::scoring {

namespace {

void require_finite(std::initializer_list<double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw Error(ErrorCode::invalid_argument, std::string(what) + ": non-finite component");
  }
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::invalid_argument, "embedding must have dim >= 1");
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "embedding contains a non-finite value");
  }
}

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

TokenDistribution::TokenDistribution(std::map<std::string, double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorCode::invalid_argument, "token distribution is empty");
  double total = 0.0;
  for (const auto& [tok, p] : probs_) {
    if (!(p > 0.0) || !std::isfinite(p) || p > 1.0) {
      throw Error(ErrorCode::invalid_argument, "token distribution has a probability outside (0, 1]: " + tok);
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "token distribution does not sum to 1");
  }
}

TokenDistribution TokenDistribution::from_counts(const std::map<std::string, std::size_t>& counts) {
  std::size_t total = 0;
  for (const auto& [tok, c] : counts) total += c;
  std::map<std::string, double> probs;
  for (const auto& [tok, c] : counts) {
    if (c > 0) probs.emplace(tok, static_cast<double>(c) / static_cast<double>(total));
  }
  return TokenDistribution(std::move(probs));
}

double TokenDistribution::at(const std::string& token) const {
  const auto it = probs_.find(token);
  return it == probs_.end() ? 0.0 : it->second;
}

TokenLogprobs::TokenLogprobs(std::vector<std::string> tokens, std::vector<double> logprobs)
    : tokens_(std::move(tokens)), logprobs_(std::move(logprobs)) {
  if (tokens_.size() != logprobs_.size()) {
    throw Error(ErrorCode::invalid_argument, "token and logprob counts differ");
  }
  if (tokens_.empty()) throw Error(ErrorCode::invalid_argument, "empty token list");
  for (double lp : logprobs_) {
    if (!std::isfinite(lp) || lp > 0.0) throw Error(ErrorCode::invalid_argument, "logprob must be finite and <= 0");
  }
}

void TWeights::validate() const {
  if (novelty < 0.0 || relevance < 0.0 || !std::isfinite(novelty) || !std::isfinite(relevance)) {
    throw Error(ErrorCode::invalid_argument, "t-score weights must be non-negative");
  }
  if (std::abs(novelty + relevance - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "t-score weights must sum to 1");
  }
}

std::string_view to_string(RelevanceMethod m) {
  switch (m) {
    case RelevanceMethod::greedy_token_f1: return "greedy_token_f1";
    case RelevanceMethod::sentence_cosine_fallback: return "sentence_cosine_fallback";
    case RelevanceMethod::backend_pair_score: return "backend_pair_score";
    case RelevanceMethod::unknown: return "unknown";
  }
  return "unknown";
}

RelevanceMethod relevance_method_from_string(std::string_view s) {
  if (s == "greedy_token_f1") return RelevanceMethod::greedy_token_f1;
  if (s == "sentence_cosine_fallback") return RelevanceMethod::sentence_cosine_fallback;
  if (s == "backend_pair_score") return RelevanceMethod::backend_pair_score;
  return RelevanceMethod::unknown;
}

ScoreBreakdown ScoreBreakdown::compose(double novelty, double surprise, double divergence, double relevance,
                                       RelevanceMethod method, const TWeights& t_weights) {
  ScoreBreakdown b;
  b.novelty = novelty;
  b.surprise = surprise;
  b.divergence = divergence;
  b.relevance = relevance;
  b.creativity_a = creativity_score_a(novelty, surprise, divergence, relevance);
  b.r_score = scoring::r_score(novelty, surprise, relevance);
  b.t_score = scoring::t_score(novelty, relevance, t_weights);
  b.relevance_method = method;
  return b;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::invalid_argument,
                "embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::degenerate_input, "zero-norm embedding");
  double dot = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) dot += av[i] * bv[i];
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double novelty(const EmbeddingVector& prompt_emb, const EmbeddingVector& output_emb) {
  return 1.0 - cosine_similarity(prompt_emb, output_emb);
}

double corpus_novelty(const EmbeddingVector& output_emb, std::span<const EmbeddingVector> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::invalid_argument, "empty corpus");
  double best = -1.0;
  for (const auto& c : corpus) best = std::max(best, cosine_similarity(output_emb, c));
  return 1.0 - best;
}

double surprise(const TokenLogprobs& lp) {
  double sum = 0.0;
  for (double x : lp.logprobs()) sum += x;
  // -0.0 would print oddly in tables
  const double s = -sum / static_cast<double>(lp.size());
  return s == 0.0 ? 0.0 : s;
}

TokenDistribution token_distribution(std::string_view text) {
  const auto tokens = text::normalize_tokens(text);
  if (tokens.empty()) throw Error(ErrorCode::invalid_argument, "text is empty after normalization");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : tokens) ++counts[t];
  return TokenDistribution::from_counts(counts);
}

double js_divergence(const TokenDistribution& p, const TokenDistribution& q) {
  // Walk the two sorted supports in lockstep to cover the union.
  const auto& pm = p.probs();
  const auto& qm = q.probs();
  auto pi = pm.begin();
  auto qi = qm.begin();
  double kl_p = 0.0;
  double kl_q = 0.0;
  while (pi != pm.end() || qi != qm.end()) {
    double pv = 0.0;
    double qv = 0.0;
    if (qi == qm.end() || (pi != pm.end() && pi->first < qi->first)) {
      pv = (pi++)->second;
    } else if (pi == pm.end() || qi->first < pi->first) {
      qv = (qi++)->second;
    } else {
      pv = (pi++)->second;
      qv = (qi++)->second;
    }
    const double m = 0.5 * (pv + qv);
    if (pv > 0.0) kl_p += pv * std::log2(pv / m);
    if (qv > 0.0) kl_q += qv * std::log2(qv / m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

namespace {

double directional_mean(std::span<const TokenEmbedding> from, std::span<const TokenEmbedding> to) {
  double total = 0.0;
  for (const auto& f : from) {
    double best = 0.0;
    for (const auto& t : to) best = std::max(best, std::clamp(cosine_similarity(f.vector, t.vector), 0.0, 1.0));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

MatchScores greedy_match(std::span<const TokenEmbedding> cand, std::span<const TokenEmbedding> ref) {
  if (cand.empty() || ref.empty()) throw Error(ErrorCode::invalid_argument, "greedy match needs non-empty token lists");
  MatchScores m;
  m.precision = directional_mean(cand, ref);
  m.recall = directional_mean(ref, cand);
  const double denom = m.precision + m.recall;
  m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
  return m;
}

double greedy_match_f1(std::span<const TokenEmbedding> cand, std::span<const TokenEmbedding> ref) {
  return greedy_match(cand, ref).f1;
}

double sentence_relevance_fallback(const EmbeddingVector& a, const EmbeddingVector& b) {
  return std::clamp((cosine_similarity(a, b) + 1.0) / 2.0, 0.0, 1.0);
}

double creativity_score_a(double n, double s, double d, double r) {
  require_finite({n, s, d, r}, "creativity_score_a");
  return 1.0 * n + 0.5 * s + 0.5 * d + 0.2 * r;
}

double r_score(double n, double s, double r) {
  require_finite({n, s, r}, "r_score");
  return 0.4 * n + 0.4 * s + 0.2 * r;
}

double t_score(double n, double r, const TWeights& w) {
  require_finite({n, r}, "t_score");
  w.validate();
  return w.novelty * n + w.relevance * r;
}

}  // namespace earth::scoring
