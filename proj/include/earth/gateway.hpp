#pragma once

// Uniform access to text, embedding, image, image-text and captioning
// backends. Backends only transport; validation, retries, concurrency bounds
// and per-session embedding consistency live in Gateway.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "earth/scoring.hpp"

namespace earth::gateway {

struct SamplingProfile {
  std::string name;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_new_tokens = 40;
  int variants = 1;

  void validate() const;
  bool operator==(const SamplingProfile&) const = default;
};

namespace profiles {
SamplingProfile standard();  // "std": 0.7 / 0.9
SamplingProfile error_induced();  // "err": 1.3 / 0.9
SamplingProfile amplify();  // 1.5 / 0.95, 55 tokens, 5 variants
SamplingProfile refine();  // 0.9 / 0.9, 5 candidates
std::vector<SamplingProfile> defaults();
}  // namespace profiles

struct GenerationRequest {
  std::string system_prompt;
  std::string user_prompt;
  SamplingProfile profile;
  std::uint64_t seed = 0;
};

// What a text backend hands back for one choice, before validation.
struct RawGeneration {
  std::string text;
  std::optional<std::vector<std::pair<std::string, double>>> token_logprobs;
};

struct GenerationResult {
  std::string text;
  scoring::TokenLogprobs token_logprobs;
  std::string backend_id;
  std::string profile_name;
};

struct ImageArtifact {
  std::string image_bytes;
  std::string format = "png";
  std::string prompt_used;
  std::string backend_id;

  // Non-empty bytes whose magic matches the declared format.
  void validate() const;
};

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string id() const = 0;
  // Must return request.profile.variants choices.
  virtual std::vector<RawGeneration> complete(const GenerationRequest& request) = 0;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string id() const = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;

  virtual bool supports_token_embeddings() const { return false; }
  virtual std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(const std::string& text);

  // A backend that can score a (candidate, reference) pair directly, e.g. a
  // hosted BERTScore. nullopt means "no score for this pair".
  virtual bool supports_pair_relevance() const { return false; }
  virtual std::optional<double> pair_relevance(const std::string& candidate, const std::string& reference);
};

class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  virtual std::string id() const = 0;
  virtual ImageArtifact generate(const std::string& prompt) = 0;
};

class ImageTextBackend {
 public:
  virtual ~ImageTextBackend() = default;
  virtual std::string id() const = 0;
  virtual double similarity(const ImageArtifact& image, const std::string& text) = 0;
};

class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string caption(const ImageArtifact& image) = 0;
};

struct Backends {
  std::shared_ptr<TextBackend> text;
  std::shared_ptr<EmbeddingBackend> embedding;
  std::shared_ptr<ImageBackend> image;
  std::shared_ptr<ImageTextBackend> image_text;
  std::shared_ptr<CaptionBackend> caption;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{200};
  double backoff_factor = 2.0;
  double jitter = 0.5;  // delay scaled by a uniform factor in [1 - jitter, 1 + jitter]
};

struct GatewayOptions {
  int max_concurrency = 4;
  RetryPolicy retry;
  std::uint64_t run_seed = 0;
};

// Counting semaphore with RAII slots.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int slots);

  class Slot {
   public:
    explicit Slot(ConcurrencyLimiter& l);
    ~Slot();
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    ConcurrencyLimiter& limiter_;
  };

  int in_flight() const;
  int peak() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int free_;
  int in_flight_ = 0;
  int peak_ = 0;
};

class Gateway {
 public:
  Gateway(Backends backends, GatewayOptions options = {});

  // Exactly profile.variants results, each trimmed, non-empty and carrying
  // logprobs. The request seed is derived from the run seed and the request
  // content, so replays are order-independent.
  std::vector<GenerationResult> generate(const std::string& system_prompt, const std::string& user_prompt,
                                         const SamplingProfile& profile) const;

  scoring::EmbeddingVector embed_sentence(const std::string& text) const;

  bool has_token_embeddings() const;
  std::vector<scoring::TokenEmbedding> embed_tokens(const std::string& text) const;

  bool has_pair_relevance() const;
  std::optional<double> pair_relevance(const std::string& candidate, const std::string& reference) const;

  bool has_crossmodal() const;
  std::optional<std::string> crossmodal_unavailable_reason() const;
  ImageArtifact generate_image(const std::string& prompt) const;
  double image_text_similarity(const ImageArtifact& image, const std::string& text) const;
  std::string caption_image(const ImageArtifact& image) const;

  std::map<std::string, std::string> identities() const;
  const GatewayOptions& options() const { return options_; }
  const ConcurrencyLimiter& limiter() const { return *limiter_; }

  std::uint64_t request_seed(const std::string& system_prompt, const std::string& user_prompt,
                             const SamplingProfile& profile) const;

 private:
  template <typename Fn>
  auto with_retry(const char* what, Fn&& fn) const -> decltype(fn());

  void check_dimension(std::size_t dim) const;

  Backends backends_;
  GatewayOptions options_;
  std::unique_ptr<ConcurrencyLimiter> limiter_;
  mutable std::mutex cache_mu_;
  mutable std::map<std::string, scoring::EmbeddingVector> sentence_cache_;
  mutable std::optional<std::size_t> session_dim_;
};

}  // namespace earth::gateway
