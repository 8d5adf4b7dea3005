#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "earth/candidate.hpp"
#include "earth/gateway.hpp"
#include "earth/http_backends.hpp"

namespace earth {

// What novelty, divergence and relevance are measured against.
enum class ReferenceKind { theme_prompt, seed };

struct PipelineConfig {
  std::vector<std::string> themes;
  std::vector<gateway::SamplingProfile> profiles = gateway::profiles::defaults();
  std::vector<std::string> e_methods{"std", "err"};
  std::string seed_method = "err";
  std::string amplify_profile = "amplify";
  std::string refine_profile = "refine";
  int seeds_k = 15;
  int variants_per_seed = 5;
  int refine_top_k = 20;
  int refine_candidates = 5;
  scoring::TWeights t_weights;
  bool crossmodal_enabled = true;
  std::uint64_t run_seed = 0;
  std::map<Stage, ReferenceKind> reference{
      {Stage::E, ReferenceKind::theme_prompt},
      {Stage::A, ReferenceKind::seed},
      {Stage::R, ReferenceKind::seed},
      {Stage::T, ReferenceKind::seed},
  };

  PipelineConfig();

  void validate() const;
  const gateway::SamplingProfile& profile(const std::string& name) const;
  // Seed-count bound that needs the E outputs: seeds_k <= err candidates.
  std::size_t expected_e_count() const;
};

std::vector<std::string> default_themes();

struct BackendConfig {
  bool mock = false;
  bool mock_token_embeddings = true;
  bool mock_crossmodal = true;
  std::optional<gateway::HttpEndpoint> text;
  std::optional<gateway::EmbeddingEndpoints> embedding;
  std::optional<gateway::HttpEndpoint> image;
  std::optional<gateway::HttpEndpoint> image_text;
  std::optional<gateway::HttpEndpoint> caption;
  std::string crossmodal_replay;  // fixture path; empty for none
};

struct RunConfig {
  PipelineConfig pipeline;
  BackendConfig backends;
  gateway::GatewayOptions gateway;
  std::string data_dir;
  std::string serve_addr = "127.0.0.1:8080";
  std::string cors_origin = "*";
  std::filesystem::path base_dir;  // directory relative paths resolve against
};

nlohmann::json to_json(const PipelineConfig& c);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);  // not_found when missing, config when invalid

gateway::Backends build_backends(const RunConfig& cfg);

}  // namespace earth
