#pragma once

// Backends that replay a recorded cross-modal evaluation: images, joint
// text-image similarities, captions and caption-vs-slogan relevance, keyed by
// slogan text.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "earth/gateway.hpp"

namespace earth::gateway {

struct CrossmodalFixtureRow {
  std::string id;
  std::string slogan;
  std::string image_keywords;
  double clip_score = 0.0;
  std::string caption;
  double caption_f1 = 0.0;
};

std::vector<CrossmodalFixtureRow> load_crossmodal_fixture(const std::filesystem::path& path);

class CrossmodalReplay {
 public:
  explicit CrossmodalReplay(std::vector<CrossmodalFixtureRow> rows);

  const std::vector<CrossmodalFixtureRow>& rows() const { return rows_; }
  // Row whose slogan appears in the given prompt or text; throws not_found.
  const CrossmodalFixtureRow& find_in(const std::string& haystack) const;
  const CrossmodalFixtureRow* find_slogan(const std::string& slogan) const;

 private:
  std::vector<CrossmodalFixtureRow> rows_;
};

class ReplayImageBackend : public ImageBackend {
 public:
  explicit ReplayImageBackend(std::shared_ptr<const CrossmodalReplay> replay) : replay_(std::move(replay)) {}
  std::string id() const override { return "replay-image"; }
  ImageArtifact generate(const std::string& prompt) override;

 private:
  std::shared_ptr<const CrossmodalReplay> replay_;
};

class ReplayImageTextBackend : public ImageTextBackend {
 public:
  explicit ReplayImageTextBackend(std::shared_ptr<const CrossmodalReplay> replay) : replay_(std::move(replay)) {}
  std::string id() const override { return "replay-image-text"; }
  double similarity(const ImageArtifact& image, const std::string& text) override;

 private:
  std::shared_ptr<const CrossmodalReplay> replay_;
};

class ReplayCaptionBackend : public CaptionBackend {
 public:
  explicit ReplayCaptionBackend(std::shared_ptr<const CrossmodalReplay> replay) : replay_(std::move(replay)) {}
  std::string id() const override { return "replay-caption"; }
  std::string caption(const ImageArtifact& image) override;

 private:
  std::shared_ptr<const CrossmodalReplay> replay_;
};

// Delegates embeddings to an inner backend and answers pair relevance for the
// recorded (caption, slogan) pairs only.
class ReplayRelevanceBackend : public EmbeddingBackend {
 public:
  ReplayRelevanceBackend(std::shared_ptr<const CrossmodalReplay> replay, std::shared_ptr<EmbeddingBackend> inner)
      : replay_(std::move(replay)), inner_(std::move(inner)) {}
  std::string id() const override { return inner_->id() + "+replay-relevance"; }
  std::vector<double> embed(const std::string& text) override { return inner_->embed(text); }
  bool supports_token_embeddings() const override { return inner_->supports_token_embeddings(); }
  std::vector<std::pair<std::string, std::vector<double>>> embed_tokens(const std::string& text) override {
    return inner_->embed_tokens(text);
  }
  bool supports_pair_relevance() const override { return true; }
  std::optional<double> pair_relevance(const std::string& candidate, const std::string& reference) override;

 private:
  std::shared_ptr<const CrossmodalReplay> replay_;
  std::shared_ptr<EmbeddingBackend> inner_;
};

// Swaps the cross-modal backends (and wraps the embedding backend) for replay.
void install_crossmodal_replay(Backends& backends, std::shared_ptr<const CrossmodalReplay> replay);

}  // namespace earth::gateway
