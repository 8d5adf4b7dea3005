#pragma once

// Creativity metrics and composite scores. Everything here is pure and
// stateless; invalid inputs raise earth::Error.

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace earth::scoring {

class EmbeddingVector {
 public:
  // Throws invalid_argument on an empty or non-finite vector.
  explicit EmbeddingVector(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double norm() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

// Probability mass over tokens. Ordered so iteration is deterministic.
class TokenDistribution {
 public:
  // All probabilities must be > 0 and sum to 1 within 1e-9.
  explicit TokenDistribution(std::map<std::string, double> probs);

  static TokenDistribution from_counts(const std::map<std::string, std::size_t>& counts);

  const std::map<std::string, double>& probs() const { return probs_; }
  double at(const std::string& token) const;  // 0 when absent

 private:
  std::map<std::string, double> probs_;
};

class TokenLogprobs {
 public:
  // Equal lengths, non-empty, every logprob finite and <= 0.
  TokenLogprobs(std::vector<std::string> tokens, std::vector<double> logprobs);

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<double>& logprobs() const { return logprobs_; }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::vector<double> logprobs_;
};

struct TokenEmbedding {
  std::string token;
  EmbeddingVector vector;
};

struct TWeights {
  double novelty = 0.7;
  double relevance = 0.3;

  // Non-negative and summing to 1 within 1e-9.
  void validate() const;
};

// Alternates the weight grid was searched over; the default is the winner.
inline constexpr TWeights kTWeightAlternates[] = {{0.5, 0.5}, {0.8, 0.2}, {0.6, 0.4}};

enum class RelevanceMethod {
  greedy_token_f1,
  sentence_cosine_fallback,
  backend_pair_score,
  unknown,
};

std::string_view to_string(RelevanceMethod m);
RelevanceMethod relevance_method_from_string(std::string_view s);

struct ScoreBreakdown {
  double novelty = 0.0;
  double surprise = 0.0;
  double divergence = 0.0;
  double relevance = 0.0;
  double creativity_a = 0.0;
  double r_score = 0.0;
  double t_score = 0.0;
  RelevanceMethod relevance_method = RelevanceMethod::unknown;

  // Builds a breakdown whose composites are the defining weighted sums of the
  // supplied components.
  static ScoreBreakdown compose(double novelty, double surprise, double divergence, double relevance,
                                RelevanceMethod method, const TWeights& t_weights = {});
};

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// 1 - cosine similarity, in [0, 2].
double novelty(const EmbeddingVector& prompt_emb, const EmbeddingVector& output_emb);

// Distance to the nearest corpus item.
double corpus_novelty(const EmbeddingVector& output_emb, std::span<const EmbeddingVector> corpus);

// Mean negative log-likelihood per token, in nats.
double surprise(const TokenLogprobs& lp);

TokenDistribution token_distribution(std::string_view text);

// Base-2 Jensen-Shannon divergence over the union support.
double js_divergence(const TokenDistribution& p, const TokenDistribution& q);

struct MatchScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy max-similarity matching in both directions with similarities clamped
// to [0, 1]; no IDF weighting.
MatchScores greedy_match(std::span<const TokenEmbedding> cand, std::span<const TokenEmbedding> ref);
double greedy_match_f1(std::span<const TokenEmbedding> cand, std::span<const TokenEmbedding> ref);

// Used when token-level embeddings are unavailable.
double sentence_relevance_fallback(const EmbeddingVector& a, const EmbeddingVector& b);

double creativity_score_a(double n, double s, double d, double r);
double r_score(double n, double s, double r);
double t_score(double n, double r, const TWeights& w = {});

// Indices of the top k items ranked by score descending, then id ascending.
template <typename T, typename ScoreFn, typename IdFn>
std::vector<std::size_t> rank_top_k(std::span<const T> items, std::size_t k, ScoreFn score, IdFn id) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = score(items[a]);
    const double sb = score(items[b]);
    if (sa != sb) return sa > sb;
    return id(items[a]) < id(items[b]);
  });
  if (order.size() > k) order.resize(k);
  return order;
}

}  // namespace earth::scoring
