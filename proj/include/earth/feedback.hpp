#pragma once

// Stage H: rating batches, rating ingestion and the analytics derived from
// raw rating records. Analytics are pure functions of the records, so they
// recompute identically whatever the submission order.

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "earth/candidate.hpp"
#include "earth/gateway.hpp"
#include "earth/stats.hpp"

namespace earth::store {
class RunStore;
}

namespace earth::feedback {

struct RatingRecord {
  std::string rater_id;
  std::string candidate_id;
  int creativity = 0;
  int expressiveness = 0;
  int emotional_resonance = 0;
  int overall_impact = 0;
  std::optional<bool> metaphor_label;
  std::optional<std::string> suggestion;
  std::string submitted_at;

  // invalid_argument unless every score is in 1..5 and the ids are tokens.
  void validate() const;
  bool operator==(const RatingRecord&) const = default;
};

enum class BatchStatus { open, closed };

std::string_view to_string(BatchStatus s);

struct RatingBatch {
  std::string batch_id;
  std::string run_id;
  std::vector<std::string> candidate_ids;
  int raters_expected = 5;
  BatchStatus status = BatchStatus::open;
  std::string created_at;
};

nlohmann::json to_json(const RatingRecord& r);
RatingRecord rating_from_json(const nlohmann::json& j);  // invalid_argument on bad shape
nlohmann::json to_json(const RatingBatch& b);
RatingBatch batch_from_json(const nlohmann::json& j);

// ---- analytics -------------------------------------------------------------

struct CandidateAggregate {
  std::string candidate_id;
  std::size_t ratings = 0;
  double mean_creativity = 0.0;
  double mean_expressiveness = 0.0;
  double mean_emotional_resonance = 0.0;
  double mean_overall_impact = 0.0;
  double mean_of_dimensions = 0.0;  // mean of the four dimension means
  long overall_sum = 0;             // exact numerator of mean_overall_impact
};

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
};

struct RatingAggregate {
  std::vector<CandidateAggregate> candidates;  // id order
  std::vector<HistogramBin> histogram;         // 40 bins of width 0.1 over [1, 5]
  double fraction_at_least_4 = 0.0;
  std::size_t rating_count = 0;
};

// Per-candidate means; histogram over mean overall_impact. invalid_argument when empty.
RatingAggregate aggregate_ratings(const std::vector<RatingRecord>& ratings);

struct MetaphorBreakdown {
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;
  std::size_t metaphorical = 0;
  double share_metaphorical = 0.0;
  std::optional<double> mean_metaphorical;
  std::optional<double> mean_literal;
  std::optional<stats::TTestResult> test;  // Welch, metaphorical vs literal
  std::string test_omitted_reason;
};

// A candidate's label is the raters' majority; an even split counts as metaphorical.
MetaphorBreakdown metaphor_breakdown(const std::vector<RatingRecord>& ratings);

struct Keyword {
  std::string term;
  std::size_t count = 0;
};

const std::set<std::string>& default_stopwords();

// Unigrams and adjacent-pair bigrams of non-stopwords; count desc, term asc.
std::vector<Keyword> keyword_frequencies(const std::vector<RatingRecord>& ratings,
                                         const std::set<std::string>& stopwords = default_stopwords());

struct StructuralDescriptor {
  std::string candidate_id;
  std::string text;
  double mean_overall = 0.0;
  std::string length_band;  // short / medium / long
  std::size_t words = 0;
  bool imperative_lead = false;
  std::optional<bool> metaphorical;
  std::string punctuation;  // punctuation characters in order; "none" when absent
};

StructuralDescriptor describe(const std::string& candidate_id, const std::string& text);

struct PromptHints {
  std::vector<std::string> hints;
  std::vector<StructuralDescriptor> exemplars;
  std::string reason;  // set when no hints could be derived
};

// Top quartile (ceil(n/4)) by mean overall, id ascending on ties.
PromptHints derive_prompt_hints(const std::vector<RatingRecord>& ratings, const std::vector<Candidate>& candidates);

struct ProfileRating {
  std::string profile;
  std::size_t candidates = 0;
  std::size_t ratings = 0;
  double mean_overall = 0.0;
  std::optional<double> temperature;
  std::optional<double> top_p;
};

// One row per candidate method that has at least one rated candidate.
std::vector<ProfileRating> sampling_profile_analysis(const std::vector<RatingRecord>& ratings,
                                                     const std::vector<Candidate>& candidates,
                                                     const std::vector<gateway::SamplingProfile>& profiles);

nlohmann::json to_json(const RatingAggregate& a);
nlohmann::json to_json(const MetaphorBreakdown& m);
nlohmann::json to_json(const std::vector<Keyword>& k);
nlohmann::json to_json(const PromptHints& h);
nlohmann::json to_json(const std::vector<ProfileRating>& p);

// aggregate + metaphor + keywords + hints + profiles; empty sections carry a reason.
nlohmann::json analytics_json(const std::vector<RatingRecord>& ratings, const std::vector<Candidate>& candidates,
                              const std::vector<gateway::SamplingProfile>& profiles);

std::string ratings_to_csv(const std::vector<std::pair<std::string, RatingRecord>>& batch_and_rating);
std::vector<std::pair<std::string, RatingRecord>> ratings_from_csv(std::string_view data);

// ---- durable hub -----------------------------------------------------------

struct SubmitResult {
  bool replaced = false;
  std::size_t ratings_in_batch = 0;
};

class FeedbackHub {
 public:
  explicit FeedbackHub(store::RunStore& store);

  // Defaults to the run's T-stage finals (R when no T stage exists).
  RatingBatch create_batch(const std::string& run_id, std::optional<std::vector<std::string>> candidate_ids = {},
                           int raters_expected = 5);
  std::optional<RatingBatch> get_batch(const std::string& batch_id) const;
  std::vector<RatingBatch> list_batches(const std::string& run_id) const;
  RatingBatch close_batch(const std::string& batch_id);

  SubmitResult submit_rating(const std::string& batch_id, RatingRecord r);
  // Earliest candidate in batch order the rater has not rated yet.
  std::optional<std::string> next_for_rater(const std::string& batch_id, const std::string& rater_id) const;
  // Sorted by (candidate_id, rater_id).
  std::vector<RatingRecord> ratings(const std::string& batch_id) const;
  nlohmann::json analytics(const std::string& batch_id) const;

 private:
  struct RunState {
    std::vector<RatingBatch> batches;
    // batch -> (candidate, rater) -> record
    std::map<std::string, std::map<std::pair<std::string, std::string>, RatingRecord>> ratings;
  };

  RunState& load_run(const std::string& run_id) const;
  std::string run_of_batch(const std::string& batch_id) const;  // not_found
  RatingBatch& batch_ref(RunState& st, const std::string& batch_id) const;
  void persist(const std::string& run_id, const RunState& st);

  store::RunStore& store_;
  mutable std::mutex mu_;
  mutable std::map<std::string, RunState> runs_;
};

}  // namespace earth::feedback
