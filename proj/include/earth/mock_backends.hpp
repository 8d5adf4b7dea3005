#pragma once

// Deterministic in-process backends. Every output is a pure function of the
// mock seed and the request content.

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "earth/gateway.hpp"

namespace earth::gateway {

// Builds a 1x1 RGB png with optional tEXt chunks.
std::string make_png(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                     const std::vector<std::pair<std::string, std::string>>& text_chunks = {});

// Seeded phrase assembler over a fixed word list. Higher temperature draws
// more off-list imagery and lowers token likelihoods; some outputs come
// wrapped in chat pleasantries so the cleaning path gets exercised.
class MockTextBackend : public TextBackend {
 public:
  explicit MockTextBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string id() const override { return "mock-text"; }
  std::vector<RawGeneration> complete(const GenerationRequest& request) override;

 private:
  std::uint64_t seed_;
};

// Sentence vectors are the normalized sum of per-token hash-derived unit
// vectors, so texts sharing words land close together.
class MockEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit MockEmbeddingBackend(std::uint64_t seed = 0, std::size_t dim = 64, bool token_embeddings = true)
      : seed_(seed), dim_(dim), token_embeddings_(token_embeddings) {}
  std::string id() const override { return "mock-embedding"; }
  std::vector<double> embed(const std::string& text) override;
  bool supports_token_embeddings() const override { return token_embeddings_; }
  std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(const std::string& text) override;

  std::vector<double> token_vector(const std::string& token) const;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  bool token_embeddings_;
};

class MockImageBackend : public ImageBackend {
 public:
  explicit MockImageBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string id() const override { return "mock-image"; }
  ImageArtifact generate(const std::string& prompt) override;

 private:
  std::uint64_t seed_;
};

class MockImageTextBackend : public ImageTextBackend {
 public:
  explicit MockImageTextBackend(std::uint64_t seed = 0) : seed_(seed) {}
  std::string id() const override { return "mock-image-text"; }
  double similarity(const ImageArtifact& image, const std::string& text) override;

 private:
  std::uint64_t seed_;
};

class MockCaptionBackend : public CaptionBackend {
 public:
  std::string id() const override { return "mock-caption"; }
  std::string caption(const ImageArtifact& image) override;
};

// Wraps another text backend and keeps a copy of every request.
class RecordingTextBackend : public TextBackend {
 public:
  explicit RecordingTextBackend(std::shared_ptr<TextBackend> inner) : inner_(std::move(inner)) {}
  std::string id() const override { return inner_->id(); }
  std::vector<RawGeneration> complete(const GenerationRequest& request) override;
  std::vector<GenerationRequest> requests() const;

 private:
  std::shared_ptr<TextBackend> inner_;
  mutable std::mutex mu_;
  std::vector<GenerationRequest> requests_;
};

Backends make_mock_backends(std::uint64_t seed, bool token_embeddings = true, bool crossmodal = true);

}  // namespace earth::gateway
