#include "earth/replay_backends.hpp"

#include <fstream>

#include "json.hpp"

#include "earth/error.hpp"
#include "earth/mock_backends.hpp"
#include "earth/text.hpp"

namespace earth::gateway {

std::vector<CrossmodalFixtureRow> load_crossmodal_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open fixture " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, "fixture " + path.string() + ": " + e.what());
  }
  std::vector<CrossmodalFixtureRow> rows;
  try {
    for (const auto& r : j.at("rows")) {
      rows.push_back({r.at("id").get<std::string>(), r.at("slogan").get<std::string>(),
                      r.value("image_keywords", std::string{}), r.at("clip_score").get<double>(),
                      r.at("caption").get<std::string>(), r.at("caption_f1").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, "fixture " + path.string() + ": " + e.what());
  }
  if (rows.empty()) throw Error(ErrorCode::schema_mismatch, "fixture " + path.string() + " has no rows");
  return rows;
}

CrossmodalReplay::CrossmodalReplay(std::vector<CrossmodalFixtureRow> rows) : rows_(std::move(rows)) {}

const CrossmodalFixtureRow& CrossmodalReplay::find_in(const std::string& haystack) const {
  // Longest match first so a slogan that is a prefix of another cannot shadow it.
  const CrossmodalFixtureRow* best = nullptr;
  for (const auto& r : rows_) {
    if (haystack.find(r.slogan) != std::string::npos && (!best || r.slogan.size() > best->slogan.size())) best = &r;
  }
  if (!best) throw Error(ErrorCode::not_found, "no recorded fixture row matches: " + haystack);
  return *best;
}

const CrossmodalFixtureRow* CrossmodalReplay::find_slogan(const std::string& slogan) const {
  for (const auto& r : rows_) {
    if (r.slogan == slogan) return &r;
  }
  return nullptr;
}

ImageArtifact ReplayImageBackend::generate(const std::string& prompt) {
  const auto& row = replay_->find_in(prompt);
  const auto h = text::fnv1a(row.id);
  ImageArtifact a;
  a.image_bytes = make_png(static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                           static_cast<std::uint8_t>(h >> 16), {{"fixture_id", row.id}, {"keywords", row.image_keywords}});
  a.prompt_used = prompt;
  a.backend_id = id();
  return a;
}

double ReplayImageTextBackend::similarity(const ImageArtifact& image, const std::string& text) {
  const auto& row = replay_->find_in(image.prompt_used);
  if (row.slogan != text) throw Error(ErrorCode::not_found, "no recorded similarity for text: " + text);
  return row.clip_score;
}

std::string ReplayCaptionBackend::caption(const ImageArtifact& image) {
  return replay_->find_in(image.prompt_used).caption;
}

std::optional<double> ReplayRelevanceBackend::pair_relevance(const std::string& candidate, const std::string& reference) {
  for (const auto& r : replay_->rows()) {
    if ((r.caption == candidate && r.slogan == reference) || (r.caption == reference && r.slogan == candidate)) {
      return r.caption_f1;
    }
  }
  return inner_->supports_pair_relevance() ? inner_->pair_relevance(candidate, reference) : std::nullopt;
}

void install_crossmodal_replay(Backends& backends, std::shared_ptr<const CrossmodalReplay> replay) {
  backends.image = std::make_shared<ReplayImageBackend>(replay);
  backends.image_text = std::make_shared<ReplayImageTextBackend>(replay);
  backends.caption = std::make_shared<ReplayCaptionBackend>(replay);
  if (backends.embedding) {
    backends.embedding = std::make_shared<ReplayRelevanceBackend>(replay, backends.embedding);
  }
}

}  // namespace earth::gateway
