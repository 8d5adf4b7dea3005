#include "earth/config.hpp"

#include <fstream>

#include "earth/error.hpp"
#include "earth/mock_backends.hpp"
#include "earth/replay_backends.hpp"

namespace earth {

using nlohmann::json;

std::vector<std::string> default_themes() {
  return {"Self-Transcendence", "Green Future", "Creative Expression", "Technology for Good", "Speed and Motion"};
}

PipelineConfig::PipelineConfig() : themes(default_themes()) {}

void PipelineConfig::validate() const {
  if (themes.empty()) throw Error(ErrorCode::config, "at least one theme is required");
  for (const auto& t : themes) {
    if (t.empty()) throw Error(ErrorCode::config, "themes must be non-empty strings");
  }
  for (const auto& p : profiles) p.validate();
  if (e_methods.empty()) throw Error(ErrorCode::config, "at least one E-stage method is required");
  for (const auto& m : e_methods) profile(m);
  profile(amplify_profile);
  profile(refine_profile);
  if (seeds_k < 1 || variants_per_seed < 1 || refine_top_k < 1 || refine_candidates < 1) {
    throw Error(ErrorCode::config, "seeds_k, variants_per_seed, refine_top_k and refine_candidates must be >= 1");
  }
  if (std::find(e_methods.begin(), e_methods.end(), seed_method) == e_methods.end()) {
    throw Error(ErrorCode::config, "seed method '" + seed_method + "' is not among the E-stage methods");
  }
  const auto err_count = themes.size() * static_cast<std::size_t>(profile(seed_method).variants);
  if (static_cast<std::size_t>(seeds_k) > err_count) {
    throw Error(ErrorCode::config, "seeds_k (" + std::to_string(seeds_k) + ") exceeds the " +
                                       std::to_string(err_count) + " candidates the seed method produces");
  }
  try {
    t_weights.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what());
  }
}

const gateway::SamplingProfile& PipelineConfig::profile(const std::string& name) const {
  for (const auto& p : profiles) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::config, "unknown sampling profile: " + name);
}

std::size_t PipelineConfig::expected_e_count() const {
  std::size_t n = 0;
  for (const auto& m : e_methods) n += themes.size() * static_cast<std::size_t>(profile(m).variants);
  return n;
}

namespace {

json to_json(const gateway::SamplingProfile& p) {
  return json{{"name", p.name},
              {"temperature", p.temperature},
              {"top_p", p.top_p},
              {"max_new_tokens", p.max_new_tokens},
              {"variants", p.variants}};
}

gateway::SamplingProfile profile_from_json(const json& j) {
  gateway::SamplingProfile p;
  p.name = j.at("name").get<std::string>();
  p.temperature = j.at("temperature").get<double>();
  p.top_p = j.at("top_p").get<double>();
  p.max_new_tokens = j.value("max_new_tokens", 40);
  p.variants = j.value("variants", 5);
  return p;
}

std::string_view to_string(ReferenceKind k) { return k == ReferenceKind::seed ? "seed" : "theme_prompt"; }

ReferenceKind reference_from_string(const std::string& s) {
  if (s == "seed") return ReferenceKind::seed;
  if (s == "theme" || s == "theme_prompt") return ReferenceKind::theme_prompt;
  throw Error(ErrorCode::config, "unknown reference kind: " + s);
}

json endpoint_to_json(const gateway::HttpEndpoint& e) {
  return json{{"base_url", e.base_url},
              {"path", e.path},
              {"model", e.model},
              {"api_key_env", e.api_key_env},
              {"timeout_seconds", e.timeout_seconds}};
}

gateway::HttpEndpoint endpoint_from_json(const json& j, const std::string& default_path) {
  gateway::HttpEndpoint e;
  e.base_url = j.at("base_url").get<std::string>();
  e.path = j.value("path", default_path);
  e.model = j.value("model", std::string{});
  e.api_key_env = j.value("api_key_env", std::string{});
  e.timeout_seconds = j.value("timeout_seconds", 60);
  return e;
}

}  // namespace

json to_json(const PipelineConfig& c) {
  json profiles = json::array();
  for (const auto& p : c.profiles) profiles.push_back(to_json(p));
  json reference = json::object();
  for (const auto& [stage, kind] : c.reference) reference[std::string(earth::to_string(stage))] = to_string(kind);
  return json{{"themes", c.themes},
              {"profiles", profiles},
              {"e_methods", c.e_methods},
              {"seed_method", c.seed_method},
              {"amplify_profile", c.amplify_profile},
              {"refine_profile", c.refine_profile},
              {"seeds_k", c.seeds_k},
              {"variants_per_seed", c.variants_per_seed},
              {"refine_top_k", c.refine_top_k},
              {"refine_candidates", c.refine_candidates},
              {"t_weights", {c.t_weights.novelty, c.t_weights.relevance}},
              {"crossmodal_enabled", c.crossmodal_enabled},
              {"run_seed", c.run_seed},
              {"reference", reference}};
}

PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig c;
  try {
    if (j.contains("themes")) c.themes = j["themes"].get<std::vector<std::string>>();
    if (j.contains("profiles")) {
      // Named entries override the defaults; new names are added.
      for (const auto& pj : j["profiles"]) {
        auto p = profile_from_json(pj);
        auto it = std::find_if(c.profiles.begin(), c.profiles.end(), [&](const auto& q) { return q.name == p.name; });
        if (it != c.profiles.end()) {
          *it = p;
        } else {
          c.profiles.push_back(p);
        }
      }
    }
    c.e_methods = j.value("e_methods", c.e_methods);
    c.seed_method = j.value("seed_method", c.seed_method);
    c.amplify_profile = j.value("amplify_profile", c.amplify_profile);
    c.refine_profile = j.value("refine_profile", c.refine_profile);
    c.seeds_k = j.value("seeds_k", c.seeds_k);
    c.variants_per_seed = j.value("variants_per_seed", c.variants_per_seed);
    c.refine_top_k = j.value("refine_top_k", c.refine_top_k);
    c.refine_candidates = j.value("refine_candidates", c.refine_candidates);
    if (j.contains("t_weights")) {
      const auto w = j["t_weights"].get<std::vector<double>>();
      if (w.size() != 2) throw Error(ErrorCode::config, "t_weights must be a [novelty, relevance] pair");
      c.t_weights = {w[0], w[1]};
    }
    c.crossmodal_enabled = j.value("crossmodal_enabled", c.crossmodal_enabled);
    c.run_seed = j.value("run_seed", c.run_seed);
    if (j.contains("reference")) {
      for (const auto& [k, v] : j["reference"].items()) c.reference[stage_from_string(k)] = reference_from_string(v);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("pipeline config: ") + e.what());
  }
  // The amplify/refine profiles carry the per-seed and per-input counts.
  for (auto& p : c.profiles) {
    if (p.name == c.amplify_profile) p.variants = c.variants_per_seed;
    if (p.name == c.refine_profile) p.variants = c.refine_candidates;
  }
  return c;
}

json to_json(const RunConfig& c) {
  json backends{{"mock", c.backends.mock},
                {"mock_token_embeddings", c.backends.mock_token_embeddings},
                {"mock_crossmodal", c.backends.mock_crossmodal}};
  if (c.backends.text) backends["text"] = endpoint_to_json(*c.backends.text);
  if (c.backends.embedding) {
    auto e = endpoint_to_json(c.backends.embedding->sentence);
    if (c.backends.embedding->token_path) e["token_path"] = *c.backends.embedding->token_path;
    if (c.backends.embedding->pair_relevance_path) e["pair_relevance_path"] = *c.backends.embedding->pair_relevance_path;
    backends["embedding"] = e;
  }
  if (c.backends.image) backends["image"] = endpoint_to_json(*c.backends.image);
  if (c.backends.image_text) backends["image_text"] = endpoint_to_json(*c.backends.image_text);
  if (c.backends.caption) backends["caption"] = endpoint_to_json(*c.backends.caption);
  if (!c.backends.crossmodal_replay.empty()) backends["crossmodal_replay"] = c.backends.crossmodal_replay;
  json j = to_json(c.pipeline);
  j["backends"] = backends;
  j["gateway"] = {{"max_concurrency", c.gateway.max_concurrency},
                  {"max_retries", c.gateway.retry.max_retries},
                  {"initial_backoff_ms", c.gateway.retry.initial_delay.count()},
                  {"backoff_factor", c.gateway.retry.backoff_factor}};
  j["data_dir"] = c.data_dir;
  j["serve_addr"] = c.serve_addr;
  j["cors_origin"] = c.cors_origin;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.pipeline = pipeline_config_from_json(j);
  try {
    const auto b = j.value("backends", json::object());
    c.backends.mock = b.value("mock", false);
    c.backends.mock_token_embeddings = b.value("mock_token_embeddings", true);
    c.backends.mock_crossmodal = b.value("mock_crossmodal", true);
    if (b.contains("text")) c.backends.text = endpoint_from_json(b["text"], "/v1/chat/completions");
    if (b.contains("embedding")) {
      gateway::EmbeddingEndpoints e;
      e.sentence = endpoint_from_json(b["embedding"], "/v1/embeddings");
      // Capability flags gate the optional endpoints.
      const auto caps = b["embedding"].value("capabilities", json::object());
      if (caps.value("token_embeddings", b["embedding"].contains("token_path"))) {
        e.token_path = b["embedding"].value("token_path", std::string("/v1/token_embeddings"));
      }
      if (caps.value("pair_relevance", b["embedding"].contains("pair_relevance_path"))) {
        e.pair_relevance_path = b["embedding"].value("pair_relevance_path", std::string("/v1/relevance"));
      }
      c.backends.embedding = e;
    }
    const auto caps = b.value("capabilities", json::object());
    if (b.contains("image") && caps.value("images", true)) c.backends.image = endpoint_from_json(b["image"], "/v1/images/generations");
    if (b.contains("image_text") && caps.value("images", true)) {
      c.backends.image_text = endpoint_from_json(b["image_text"], "/v1/image_text_similarity");
    }
    if (b.contains("caption") && caps.value("captions", true)) c.backends.caption = endpoint_from_json(b["caption"], "/v1/captions");
    c.backends.crossmodal_replay = b.value("crossmodal_replay", std::string{});
    const auto g = j.value("gateway", json::object());
    c.gateway.max_concurrency = g.value("max_concurrency", 4);
    c.gateway.retry.max_retries = g.value("max_retries", 3);
    c.gateway.retry.initial_delay = std::chrono::milliseconds(g.value("initial_backoff_ms", 200));
    c.gateway.retry.backoff_factor = g.value("backoff_factor", 2.0);
    c.data_dir = j.value("data_dir", std::string{});
    c.serve_addr = j.value("serve_addr", c.serve_addr);
    c.cors_origin = j.value("cors_origin", c.cors_origin);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("run config: ") + e.what());
  }
  c.gateway.run_seed = c.pipeline.run_seed;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "config file not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  auto c = run_config_from_json(j);
  c.base_dir = std::filesystem::absolute(path).parent_path();
  return c;
}

gateway::Backends build_backends(const RunConfig& cfg) {
  gateway::Backends b;
  const auto& bc = cfg.backends;
  if (bc.mock) {
    b = gateway::make_mock_backends(cfg.pipeline.run_seed, bc.mock_token_embeddings, bc.mock_crossmodal);
  } else {
    if (!bc.text || !bc.embedding) throw Error(ErrorCode::config, "text and embedding backends are required unless mock is set");
    b.text = std::make_shared<gateway::HttpTextBackend>(*bc.text);
    b.embedding = std::make_shared<gateway::HttpEmbeddingBackend>(*bc.embedding);
    if (bc.image) b.image = std::make_shared<gateway::HttpImageBackend>(*bc.image);
    if (bc.image_text) b.image_text = std::make_shared<gateway::HttpImageTextBackend>(*bc.image_text);
    if (bc.caption) b.caption = std::make_shared<gateway::HttpCaptionBackend>(*bc.caption);
  }
  if (!bc.crossmodal_replay.empty()) {
    std::filesystem::path p(bc.crossmodal_replay);
    if (p.is_relative() && !cfg.base_dir.empty() && std::filesystem::exists(cfg.base_dir / p)) p = cfg.base_dir / p;
    gateway::install_crossmodal_replay(
        b, std::make_shared<gateway::CrossmodalReplay>(gateway::load_crossmodal_fixture(p)));
  }
  return b;
}

}  // namespace earth
