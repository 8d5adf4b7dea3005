#include "earth/gateway.hpp"

#include <cmath>
#include <random>
#include <thread>

#include "earth/error.hpp"
#include "earth/text.hpp"

namespace earth::gateway {

void SamplingProfile::validate() const {
  if (name.empty()) throw Error(ErrorCode::invalid_argument, "sampling profile needs a name");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::invalid_argument, "profile " + name + ": temperature must be > 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::invalid_argument, "profile " + name + ": top_p must be in (0, 1]");
  if (max_new_tokens < 1) throw Error(ErrorCode::invalid_argument, "profile " + name + ": max_new_tokens must be >= 1");
  if (variants < 1) throw Error(ErrorCode::invalid_argument, "profile " + name + ": variants must be >= 1");
}

namespace profiles {
SamplingProfile standard() { return {"std", 0.7, 0.9, 40, 5}; }
SamplingProfile error_induced() { return {"err", 1.3, 0.9, 40, 5}; }
SamplingProfile amplify() { return {"amplify", 1.5, 0.95, 55, 5}; }
SamplingProfile refine() { return {"refine", 0.9, 0.9, 32, 5}; }
std::vector<SamplingProfile> defaults() { return {standard(), error_induced(), amplify(), refine()}; }
}  // namespace profiles

void ImageArtifact::validate() const {
  if (image_bytes.empty()) throw Error(ErrorCode::malformed_response, "image has no bytes");
  if (format == "png") {
    static constexpr std::string_view kMagic("\x89PNG\r\n\x1a\n", 8);
    if (image_bytes.size() < kMagic.size() || std::string_view(image_bytes).substr(0, 8) != kMagic) {
      throw Error(ErrorCode::malformed_response, "image declared png but magic bytes differ");
    }
  } else if (format == "jpeg") {
    if (image_bytes.size() < 3 || static_cast<unsigned char>(image_bytes[0]) != 0xFF ||
        static_cast<unsigned char>(image_bytes[1]) != 0xD8) {
      throw Error(ErrorCode::malformed_response, "image declared jpeg but magic bytes differ");
    }
  } else {
    throw Error(ErrorCode::malformed_response, "unsupported image format: " + format);
  }
}

std::vector<std::pair<std::string, std::vector<double>>> EmbeddingBackend::embed_tokens(const std::string&) {
  throw Error(ErrorCode::capability_absent, id() + " does not provide token embeddings");
}

std::optional<double> EmbeddingBackend::pair_relevance(const std::string&, const std::string&) {
  return std::nullopt;
}

ConcurrencyLimiter::ConcurrencyLimiter(int slots) : free_(slots) {
  if (slots < 1) throw Error(ErrorCode::invalid_argument, "concurrency must be >= 1");
}

ConcurrencyLimiter::Slot::Slot(ConcurrencyLimiter& l) : limiter_(l) {
  std::unique_lock lock(l.mu_);
  l.cv_.wait(lock, [&] { return l.free_ > 0; });
  --l.free_;
  ++l.in_flight_;
  l.peak_ = std::max(l.peak_, l.in_flight_);
}

ConcurrencyLimiter::Slot::~Slot() {
  {
    std::lock_guard lock(limiter_.mu_);
    ++limiter_.free_;
    --limiter_.in_flight_;
  }
  limiter_.cv_.notify_one();
}

int ConcurrencyLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

int ConcurrencyLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

Gateway::Gateway(Backends backends, GatewayOptions options)
    : backends_(std::move(backends)),
      options_(options),
      limiter_(std::make_unique<ConcurrencyLimiter>(options.max_concurrency)) {
  if (options_.retry.max_retries < 0) throw Error(ErrorCode::invalid_argument, "max_retries must be >= 0");
}

template <typename Fn>
auto Gateway::with_retry(const char* what, Fn&& fn) const -> decltype(fn()) {
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  auto delay = std::chrono::duration<double, std::milli>(options_.retry.initial_delay);
  for (int attempt = 0;; ++attempt) {
    try {
      ConcurrencyLimiter::Slot slot(*limiter_);
      return fn();
    } catch (const Error& e) {
      if (!e.retryable() || attempt >= options_.retry.max_retries) {
        if (e.retryable()) {
          throw Error(e.code(), std::string(what) + ": giving up after " + std::to_string(attempt + 1) +
                                    " attempts: " + e.what());
        }
        throw;
      }
    }
    const double u = static_cast<double>(jitter_rng() >> 11) * 0x1.0p-53;
    const double scale = 1.0 - options_.retry.jitter + 2.0 * options_.retry.jitter * u;
    std::this_thread::sleep_for(delay * scale);
    delay *= options_.retry.backoff_factor;
  }
}

std::uint64_t Gateway::request_seed(const std::string& system_prompt, const std::string& user_prompt,
                                    const SamplingProfile& profile) const {
  std::uint64_t h = text::mix_hash(options_.run_seed, text::fnv1a(system_prompt));
  h = text::mix_hash(h, text::fnv1a(user_prompt));
  h = text::mix_hash(h, text::fnv1a(profile.name));
  return h;
}

std::vector<GenerationResult> Gateway::generate(const std::string& system_prompt, const std::string& user_prompt,
                                                const SamplingProfile& profile) const {
  if (!backends_.text) throw Error(ErrorCode::capability_absent, "no text backend configured");
  if (text::trim(system_prompt).empty() || text::trim(user_prompt).empty()) {
    throw Error(ErrorCode::invalid_argument, "generation prompts must be non-empty");
  }
  profile.validate();
  GenerationRequest request{system_prompt, user_prompt, profile, request_seed(system_prompt, user_prompt, profile)};
  auto raw = with_retry("generate", [&] { return backends_.text->complete(request); });
  if (raw.size() != static_cast<std::size_t>(profile.variants)) {
    throw Error(ErrorCode::malformed_response, "backend returned " + std::to_string(raw.size()) + " choices, expected " +
                                                   std::to_string(profile.variants));
  }
  std::vector<GenerationResult> out;
  out.reserve(raw.size());
  for (auto& r : raw) {
    auto trimmed = text::trim(r.text);
    if (trimmed.empty()) throw Error(ErrorCode::empty_generation, "empty generation");
    if (!r.token_logprobs || r.token_logprobs->empty()) {
      throw Error(ErrorCode::missing_logprobs, backends_.text->id() + " returned no token logprobs");
    }
    std::vector<std::string> tokens;
    std::vector<double> lps;
    for (auto& [tok, lp] : *r.token_logprobs) {
      tokens.push_back(tok);
      lps.push_back(lp);
    }
    out.push_back(GenerationResult{std::move(trimmed), scoring::TokenLogprobs(std::move(tokens), std::move(lps)),
                                   backends_.text->id(), profile.name});
  }
  return out;
}

void Gateway::check_dimension(std::size_t dim) const {
  std::lock_guard lock(cache_mu_);
  if (!session_dim_) {
    session_dim_ = dim;
  } else if (*session_dim_ != dim) {
    throw Error(ErrorCode::malformed_response, "embedding dimension drifted from " + std::to_string(*session_dim_) +
                                                   " to " + std::to_string(dim));
  }
}

scoring::EmbeddingVector Gateway::embed_sentence(const std::string& text) const {
  if (!backends_.embedding) throw Error(ErrorCode::capability_absent, "no embedding backend configured");
  if (text::trim(text).empty()) throw Error(ErrorCode::invalid_argument, "cannot embed empty text");
  {
    std::lock_guard lock(cache_mu_);
    if (auto it = sentence_cache_.find(text); it != sentence_cache_.end()) return it->second;
  }
  auto values = with_retry("embed_sentence", [&] { return backends_.embedding->embed(text); });
  scoring::EmbeddingVector v(std::move(values));
  check_dimension(v.dim());
  std::lock_guard lock(cache_mu_);
  return sentence_cache_.emplace(text, std::move(v)).first->second;
}

bool Gateway::has_token_embeddings() const {
  return backends_.embedding && backends_.embedding->supports_token_embeddings();
}

std::vector<scoring::TokenEmbedding> Gateway::embed_tokens(const std::string& text) const {
  if (!has_token_embeddings()) throw Error(ErrorCode::capability_absent, "token embeddings not available");
  if (text::trim(text).empty()) throw Error(ErrorCode::invalid_argument, "cannot embed empty text");
  auto raw = with_retry("embed_tokens", [&] { return backends_.embedding->embed_tokens(text); });
  if (raw.empty()) throw Error(ErrorCode::malformed_response, "backend returned no token embeddings");
  std::vector<scoring::TokenEmbedding> out;
  out.reserve(raw.size());
  for (auto& [tok, vec] : raw) {
    scoring::EmbeddingVector v(std::move(vec));
    check_dimension(v.dim());
    out.push_back({std::move(tok), std::move(v)});
  }
  return out;
}

bool Gateway::has_pair_relevance() const {
  return backends_.embedding && backends_.embedding->supports_pair_relevance();
}

std::optional<double> Gateway::pair_relevance(const std::string& candidate, const std::string& reference) const {
  if (!has_pair_relevance()) return std::nullopt;
  auto score = with_retry("pair_relevance", [&] { return backends_.embedding->pair_relevance(candidate, reference); });
  if (score && !(std::isfinite(*score) && *score >= 0.0 && *score <= 1.0)) {
    throw Error(ErrorCode::malformed_response, "pair relevance outside [0, 1]");
  }
  return score;
}

bool Gateway::has_crossmodal() const { return !crossmodal_unavailable_reason().has_value(); }

std::optional<std::string> Gateway::crossmodal_unavailable_reason() const {
  if (!backends_.image) return "no image generation backend configured";
  if (!backends_.image_text) return "no image-text similarity backend configured";
  if (!backends_.caption) return "no captioning backend configured";
  return std::nullopt;
}

ImageArtifact Gateway::generate_image(const std::string& prompt) const {
  if (!backends_.image) throw Error(ErrorCode::capability_absent, "no image generation backend configured");
  if (text::trim(prompt).empty()) throw Error(ErrorCode::invalid_argument, "image prompt must be non-empty");
  auto image = with_retry("generate_image", [&] { return backends_.image->generate(prompt); });
  image.validate();
  if (image.prompt_used.empty()) image.prompt_used = prompt;
  if (image.backend_id.empty()) image.backend_id = backends_.image->id();
  return image;
}

double Gateway::image_text_similarity(const ImageArtifact& image, const std::string& text) const {
  if (!backends_.image_text) throw Error(ErrorCode::capability_absent, "no image-text similarity backend configured");
  image.validate();
  if (text::trim(text).empty()) throw Error(ErrorCode::invalid_argument, "similarity text must be non-empty");
  const double s = with_retry("image_text_similarity", [&] { return backends_.image_text->similarity(image, text); });
  if (!std::isfinite(s) || s < -1.0 || s > 1.0) throw Error(ErrorCode::malformed_response, "similarity outside [-1, 1]");
  return s;
}

std::string Gateway::caption_image(const ImageArtifact& image) const {
  if (!backends_.caption) throw Error(ErrorCode::capability_absent, "no captioning backend configured");
  image.validate();
  auto caption = text::trim(with_retry("caption_image", [&] { return backends_.caption->caption(image); }));
  if (caption.empty()) throw Error(ErrorCode::empty_generation, "empty caption");
  return caption;
}

std::map<std::string, std::string> Gateway::identities() const {
  std::map<std::string, std::string> ids;
  if (backends_.text) ids["text"] = backends_.text->id();
  if (backends_.embedding) ids["embedding"] = backends_.embedding->id();
  if (backends_.image) ids["image"] = backends_.image->id();
  if (backends_.image_text) ids["image_text"] = backends_.image_text->id();
  if (backends_.caption) ids["caption"] = backends_.caption->id();
  return ids;
}

}  // namespace earth::gateway
