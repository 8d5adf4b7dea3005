#pragma once

// Stage orchestration: error-induced generation (E), seed selection and
// amplification (A), score-based filtering (R), refinement and cross-modal
// checks (T), and the uniform stage comparison.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "earth/candidate.hpp"
#include "earth/config.hpp"
#include "earth/gateway.hpp"
#include "earth/stats.hpp"

namespace earth::store {
class RunStore;
struct RunManifest;
}  // namespace earth::store

namespace earth::pipeline {

inline constexpr std::string_view kCopywriterSystemPrompt =
    "You are a creative advertising copywriter. Write short, memorable slogans.";
inline constexpr std::string_view kAmplifySystemPrompt =
    "You are a creative advertising copywriter. Produce exactly one concise slogan.";
inline constexpr std::string_view kRefineInstruction =
    "Refine this tagline into a final slogan. Do not explain or greet. Return exactly one concise sentence.";

std::string theme_prompt(const std::string& theme);
std::string refine_prompt(const std::string& tagline);
std::string image_prompt(const std::string& slogan);

// Strips chat pleasantries, label prefixes, surrounding quotes and trailing
// explanation lines; keeps the first line with content. May return "".
std::string clean_slogan(std::string_view raw);

// Resolves parent links across stages.
class Lineage {
 public:
  void add(const std::vector<Candidate>& cs);
  const Candidate* find(const std::string& id) const;
  // Follows parent links to the E-stage root; throws not_found when broken.
  const Candidate& root(const Candidate& c) const;

 private:
  std::map<std::string, Candidate> by_id_;
};

struct StageOutput {
  std::vector<Candidate> candidates;
  StageReport report;
};

struct ScatterRow {
  std::string id;
  std::string parent_id;
  double novelty = 0.0;
  double surprise = 0.0;
  double relevance = 0.0;
  double r_score = 0.0;
  bool selected = false;
};

struct RStageOutput {
  std::vector<Candidate> selected;  // stage R records, rank order
  std::vector<Candidate> scored_inputs;
  std::vector<ScatterRow> scatter;
  stats::LengthDeltaSummary length_delta;
  StageReport report;
};

struct CompressionStats {
  double mean_length_before = 0.0;
  double mean_length_after = 0.0;
  double length_change_pct = 0.0;
  double mean_novelty_before = 0.0;
  double mean_novelty_after = 0.0;
  double novelty_change_pct = 0.0;
  double mean_relevance_before = 0.0;
  double mean_relevance_after = 0.0;
  double relevance_change_pct = 0.0;
};

// Before/after means of character length, novelty and relevance, paired by
// parent link (after.parent_id == before.id).
CompressionStats compression_stats(const std::vector<Candidate>& before, const std::vector<Candidate>& after);

struct TStageOutput {
  std::vector<Candidate> finals;
  CompressionStats compression;
  StageReport report;
};

struct CrossmodalItem {
  Candidate candidate;
  gateway::ImageArtifact image;
  double similarity = 0.0;
  std::string caption;
  double caption_f1 = 0.0;
  scoring::RelevanceMethod caption_method = scoring::RelevanceMethod::unknown;
};

struct CrossmodalOutput {
  std::vector<CrossmodalItem> items;
  double mean_similarity = 0.0;
  double mean_caption_f1 = 0.0;
  bool skipped = false;
  std::string skip_reason;
};

struct GroupSummary {
  std::string name;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ComparisonTest {
  std::string name;
  std::string from;
  std::string to;
  std::optional<stats::TTestResult> result;
  std::string omitted_reason;
};

struct StageComparison {
  std::vector<GroupSummary> groups;
  std::vector<ComparisonTest> tests;
};

// Uniform r_score over every candidate of the groups Std, Err, R, T, with
// Welch tests Std->Err, Err->R, Std->T, R->T.
StageComparison stage_comparison(const std::vector<Candidate>& all, const std::string& std_method = "std",
                                 const std::string& err_method = "err");

nlohmann::json to_json(const StageComparison& c);
nlohmann::json to_json(const CompressionStats& c);
nlohmann::json to_json(const stats::LengthDeltaSummary& s);

class Engine {
 public:
  Engine(PipelineConfig cfg, const gateway::Gateway& gw, std::function<std::string()> clock = {});

  StageOutput run_stage_e() const;
  std::vector<Candidate> select_seeds(const std::vector<Candidate>& e_candidates) const;
  StageOutput run_stage_a(const std::vector<Candidate>& seeds) const;
  RStageOutput run_stage_r(const std::vector<Candidate>& variants, const Lineage& lineage) const;
  TStageOutput run_stage_t(const std::vector<Candidate>& inputs, const Lineage& lineage) const;
  CrossmodalOutput run_stage_t_crossmodal(const std::vector<Candidate>& finals) const;

  // Scores text against a reference; surprise comes from the generation.
  scoring::ScoreBreakdown score(const std::string& text, const std::string& reference, double surprise) const;
  std::pair<double, scoring::RelevanceMethod> relevance(const std::string& text, const std::string& reference) const;

  const PipelineConfig& config() const { return cfg_; }

 private:
  std::string reference_for(Stage stage, const Candidate& root) const;
  gateway::SamplingProfile profile_with_variants(const std::string& name, int variants) const;

  PipelineConfig cfg_;
  const gateway::Gateway& gw_;
  std::function<std::string()> clock_;
};

struct RunOptions {
  std::optional<Stage> stop_after;  // partial execution
  nlohmann::json config_snapshot;   // stored as config.json
  std::function<std::string()> clock;
};

// E -> A -> R -> T (+ cross-modal), persisting every artifact through the
// store. Stage failures leave partial artifacts and a failed manifest.
store::RunManifest run_full_pipeline(const PipelineConfig& cfg, const gateway::Gateway& gw, store::RunStore& store,
                                     const RunOptions& options = {});

// Runs fn(i) for i in [0, n) on up to `workers` threads; results keep index order.
template <typename T>
std::vector<T> parallel_map(std::size_t n, int workers, const std::function<T(std::size_t)>& fn);

}  // namespace earth::pipeline

#include "earth/detail/parallel.hpp"
