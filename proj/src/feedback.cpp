#include "earth/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "earth/config.hpp"
#include "earth/csv.hpp"
#include "earth/error.hpp"
#include "earth/run_store.hpp"
#include "earth/text.hpp"

namespace earth::feedback {

using nlohmann::json;

namespace {

bool is_token(const std::string& s) {
  if (s.empty() || s.size() > 128) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.' || c == '@';
  });
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

struct Tally {
  long creativity = 0;
  long expressiveness = 0;
  long emotional = 0;
  long overall = 0;
  std::size_t n = 0;
  std::size_t metaphor_yes = 0;
  std::size_t metaphor_no = 0;
};

std::map<std::string, Tally> tally(const std::vector<RatingRecord>& ratings) {
  std::map<std::string, Tally> t;
  for (const auto& r : ratings) {
    auto& x = t[r.candidate_id];
    x.creativity += r.creativity;
    x.expressiveness += r.expressiveness;
    x.emotional += r.emotional_resonance;
    x.overall += r.overall_impact;
    ++x.n;
    if (r.metaphor_label) ++(*r.metaphor_label ? x.metaphor_yes : x.metaphor_no);
  }
  return t;
}

std::optional<bool> majority_label(const Tally& t) {
  if (t.metaphor_yes + t.metaphor_no == 0) return std::nullopt;
  return t.metaphor_yes >= t.metaphor_no;
}

// Lead words read as an imperative verb.
const std::set<std::string>& imperative_verbs() {
  static const std::set<std::string> v{
      "awaken", "be",      "believe", "bloom",   "break",     "build",  "capture", "carry",   "change",  "chase",
      "choose", "create",  "dare",    "discover", "do",       "dream",  "drive",   "elevate", "embrace", "empower",
      "enjoy",  "experience", "explore", "feel",  "find",      "fly",    "follow",  "go",      "grow",    "harness",
      "ignite", "imagine", "inspire", "join",    "keep",      "leap",   "let",     "live",    "make",    "move",
      "open",   "rise",    "run",     "see",     "shape",     "shine",  "spark",   "speak",   "start",   "step",
      "think",  "touch",   "transcend", "transform", "try",   "unleash", "unlock", "wake",    "write"};
  return v;
}

}  // namespace

void RatingRecord::validate() const {
  if (!is_token(rater_id)) throw Error(ErrorCode::invalid_argument, "rater_id must be a non-empty name token");
  if (candidate_id.empty()) throw Error(ErrorCode::invalid_argument, "candidate_id is required");
  const std::pair<const char*, int> scores[] = {{"creativity", creativity},
                                                {"expressiveness", expressiveness},
                                                {"emotional_resonance", emotional_resonance},
                                                {"overall_impact", overall_impact}};
  for (const auto& [name, v] : scores) {
    if (v < 1 || v > 5) {
      throw Error(ErrorCode::invalid_argument, std::string(name) + " must be an integer in 1..5, got " + std::to_string(v));
    }
  }
}

std::string_view to_string(BatchStatus s) { return s == BatchStatus::open ? "open" : "closed"; }

json to_json(const RatingRecord& r) {
  json j{{"rater_id", r.rater_id},
         {"candidate_id", r.candidate_id},
         {"creativity", r.creativity},
         {"expressiveness", r.expressiveness},
         {"emotional_resonance", r.emotional_resonance},
         {"overall_impact", r.overall_impact},
         {"submitted_at", r.submitted_at}};
  j["metaphor_label"] = r.metaphor_label ? json(*r.metaphor_label) : json(nullptr);
  j["suggestion"] = r.suggestion ? json(*r.suggestion) : json(nullptr);
  return j;
}

RatingRecord rating_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "rating must be a JSON object");
  auto str = [&](const char* k) -> std::string {
    if (!j.contains(k) || !j[k].is_string()) throw Error(ErrorCode::invalid_argument, std::string(k) + " must be a string");
    return j[k].get<std::string>();
  };
  auto score = [&](const char* k) -> int {
    if (!j.contains(k) || !j[k].is_number_integer()) {
      throw Error(ErrorCode::invalid_argument, std::string(k) + " must be an integer in 1..5");
    }
    const auto v = j[k].get<long long>();
    if (v < 1 || v > 5) throw Error(ErrorCode::invalid_argument, std::string(k) + " must be an integer in 1..5");
    return static_cast<int>(v);
  };
  RatingRecord r;
  r.rater_id = str("rater_id");
  r.candidate_id = str("candidate_id");
  r.creativity = score("creativity");
  r.expressiveness = score("expressiveness");
  r.emotional_resonance = score("emotional_resonance");
  r.overall_impact = score("overall_impact");
  if (j.contains("metaphor_label") && !j["metaphor_label"].is_null()) {
    if (!j["metaphor_label"].is_boolean()) throw Error(ErrorCode::invalid_argument, "metaphor_label must be boolean");
    r.metaphor_label = j["metaphor_label"].get<bool>();
  }
  if (j.contains("suggestion") && !j["suggestion"].is_null()) {
    if (!j["suggestion"].is_string()) throw Error(ErrorCode::invalid_argument, "suggestion must be a string");
    r.suggestion = j["suggestion"].get<std::string>();
  }
  if (j.contains("submitted_at") && j["submitted_at"].is_string()) r.submitted_at = j["submitted_at"].get<std::string>();
  r.validate();
  return r;
}

json to_json(const RatingBatch& b) {
  return {{"batch_id", b.batch_id},
          {"run_id", b.run_id},
          {"candidate_ids", b.candidate_ids},
          {"raters_expected", b.raters_expected},
          {"status", std::string(to_string(b.status))},
          {"created_at", b.created_at}};
}

RatingBatch batch_from_json(const json& j) {
  try {
    RatingBatch b;
    b.batch_id = j.at("batch_id").get<std::string>();
    b.run_id = j.at("run_id").get<std::string>();
    b.candidate_ids = j.at("candidate_ids").get<std::vector<std::string>>();
    b.raters_expected = j.at("raters_expected").get<int>();
    const auto st = j.at("status").get<std::string>();
    if (st != "open" && st != "closed") throw Error(ErrorCode::schema_mismatch, "unknown batch status " + st);
    b.status = st == "open" ? BatchStatus::open : BatchStatus::closed;
    b.created_at = j.value("created_at", std::string{});
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, std::string("batch record: ") + e.what());
  }
}

RatingAggregate aggregate_ratings(const std::vector<RatingRecord>& ratings) {
  if (ratings.empty()) throw Error(ErrorCode::invalid_argument, "batch has no ratings");
  RatingAggregate out;
  out.rating_count = ratings.size();
  constexpr std::size_t kBins = 40;
  for (std::size_t i = 0; i < kBins; ++i) {
    out.histogram.push_back({(10.0 + static_cast<double>(i)) / 10.0, (11.0 + static_cast<double>(i)) / 10.0, 0});
  }
  std::size_t at_least_4 = 0;
  for (const auto& [id, t] : tally(ratings)) {
    const double n = static_cast<double>(t.n);
    CandidateAggregate a;
    a.candidate_id = id;
    a.ratings = t.n;
    a.mean_creativity = static_cast<double>(t.creativity) / n;
    a.mean_expressiveness = static_cast<double>(t.expressiveness) / n;
    a.mean_emotional_resonance = static_cast<double>(t.emotional) / n;
    a.mean_overall_impact = static_cast<double>(t.overall) / n;
    a.mean_of_dimensions = (a.mean_creativity + a.mean_expressiveness + a.mean_emotional_resonance +
                            a.mean_overall_impact) / 4.0;
    a.overall_sum = t.overall;
    // Bin on the exact rational sum/n so 4.0 never lands in the 3.9 bin.
    const long count = static_cast<long>(t.n);
    auto bin = static_cast<std::size_t>((10 * t.overall - 10 * count) / count);
    out.histogram[std::min(bin, kBins - 1)].count++;
    if (t.overall >= 4 * count) ++at_least_4;
    out.candidates.push_back(a);
  }
  out.fraction_at_least_4 = static_cast<double>(at_least_4) / static_cast<double>(out.candidates.size());
  return out;
}

MetaphorBreakdown metaphor_breakdown(const std::vector<RatingRecord>& ratings) {
  MetaphorBreakdown out;
  std::vector<double> yes, no;
  for (const auto& [id, t] : tally(ratings)) {
    const auto label = majority_label(t);
    if (!label) {
      ++out.unlabeled;
      continue;
    }
    ++out.labeled;
    const double mean = static_cast<double>(t.overall) / static_cast<double>(t.n);
    (*label ? yes : no).push_back(mean);
  }
  out.metaphorical = yes.size();
  out.share_metaphorical = out.labeled ? static_cast<double>(yes.size()) / static_cast<double>(out.labeled) : 0.0;
  if (!yes.empty()) out.mean_metaphorical = mean_of(yes);
  if (!no.empty()) out.mean_literal = mean_of(no);
  if (yes.empty() || no.empty()) {
    out.test_omitted_reason = out.labeled == 0 ? "no labeled candidates"
                              : yes.empty()    ? "no candidates labeled metaphorical"
                                               : "no candidates labeled literal";
  } else if (yes.size() < 2 || no.size() < 2) {
    out.test_omitted_reason = "a group has fewer than 2 candidates";
  } else {
    try {
      out.test = stats::welch_t_test(yes, no);
    } catch (const Error& e) {
      out.test_omitted_reason = e.what();
    }
  }
  return out;
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> s{
      "a",     "about", "above", "after", "again", "all",   "also",  "am",    "an",    "and",   "any",    "are",
      "as",    "at",    "be",    "been",  "but",   "by",    "can",   "could", "did",   "do",    "does",   "for",
      "from",  "had",   "has",   "have",  "he",    "her",   "here",  "him",   "his",   "how",   "i",      "if",
      "in",    "into",  "is",    "it",    "its",   "just",  "me",    "my",    "no",    "not",   "of",     "on",
      "one",   "or",    "our",   "out",   "she",   "so",    "some",  "than",  "that",  "the",   "their",  "them",
      "then",  "there", "these", "they",  "this",  "those", "to",    "too",   "up",    "us",    "very",   "was",
      "we",    "were",  "what",  "when",  "which", "who",   "will",  "with",  "would", "you",   "your",   "should",
      "maybe", "bit",   "lot",   "really"};
  return s;
}

std::vector<Keyword> keyword_frequencies(const std::vector<RatingRecord>& ratings,
                                         const std::set<std::string>& stopwords) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : ratings) {
    if (!r.suggestion) continue;
    const auto tokens = text::normalize_tokens(*r.suggestion);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (stopwords.count(tokens[i])) continue;
      ++counts[tokens[i]];
      if (i + 1 < tokens.size() && !stopwords.count(tokens[i + 1])) ++counts[tokens[i] + " " + tokens[i + 1]];
    }
  }
  std::vector<Keyword> out;
  for (const auto& [term, n] : counts) out.push_back({term, n});
  std::stable_sort(out.begin(), out.end(), [](const Keyword& a, const Keyword& b) { return a.count > b.count; });
  return out;
}

StructuralDescriptor describe(const std::string& candidate_id, const std::string& text_in) {
  StructuralDescriptor d;
  d.candidate_id = candidate_id;
  d.text = text_in;
  const auto tokens = text::normalize_tokens(text_in);
  d.words = tokens.size();
  d.length_band = d.words <= 4 ? "short" : d.words <= 8 ? "medium" : "long";
  d.imperative_lead = !tokens.empty() && imperative_verbs().count(tokens.front()) > 0;
  for (unsigned char c : text_in) {
    if (c < 0x80 && std::ispunct(c) && c != '\'' && c != '"') d.punctuation.push_back(static_cast<char>(c));
  }
  if (d.punctuation.empty()) d.punctuation = "none";
  return d;
}

PromptHints derive_prompt_hints(const std::vector<RatingRecord>& ratings, const std::vector<Candidate>& candidates) {
  PromptHints out;
  const auto t = tally(ratings);
  std::map<std::string, const Candidate*> by_id;
  for (const auto& c : candidates) by_id[c.id] = &c;

  struct Ranked {
    std::string id;
    long sum;
    std::size_t n;
  };
  std::vector<Ranked> ranked;
  for (const auto& [id, x] : t) {
    if (by_id.count(id)) ranked.push_back({id, x.overall, x.n});
  }
  if (ranked.size() < 4) {
    out.reason = "fewer than 4 rated candidates (" + std::to_string(ranked.size()) + ")";
    return out;
  }
  // Compare sum_a / n_a against sum_b / n_b exactly.
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    const long lhs = a.sum * static_cast<long>(b.n);
    const long rhs = b.sum * static_cast<long>(a.n);
    if (lhs != rhs) return lhs > rhs;
    return a.id < b.id;
  });
  const std::size_t k = (ranked.size() + 3) / 4;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& r = ranked[i];
    auto d = describe(r.id, by_id[r.id]->text);
    d.mean_overall = static_cast<double>(r.sum) / static_cast<double>(r.n);
    d.metaphorical = majority_label(t.at(r.id));
    out.exemplars.push_back(std::move(d));
  }

  std::map<std::string, std::size_t> bands, punct;
  std::size_t imperative = 0, metaphorical = 0, literal = 0;
  for (const auto& d : out.exemplars) {
    ++bands[d.length_band];
    ++punct[d.punctuation];
    if (d.imperative_lead) ++imperative;
    if (d.metaphorical) ++(*d.metaphorical ? metaphorical : literal);
  }
  auto most_common = [](const std::map<std::string, std::size_t>& m) {
    return std::max_element(m.begin(), m.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
  };
  const auto n = out.exemplars.size();
  if (metaphorical == n) {
    out.hints.push_back("favor metaphorical imagery");
  } else if (literal == n) {
    out.hints.push_back("favor literal, concrete statements");
  } else if (metaphorical * 2 > n) {
    out.hints.push_back("lean toward metaphorical imagery");
  }
  if (imperative * 2 > n) out.hints.push_back("open with an imperative verb");
  const auto band = most_common(bands);
  out.hints.push_back(band == "short"    ? "keep it short (4 words or fewer)"
                      : band == "medium" ? "keep it to 5-8 words"
                                         : "allow longer lines (9+ words)");
  const auto p = most_common(punct);
  out.hints.push_back(p == "none" ? "omit punctuation" : "use the punctuation pattern \"" + p + "\"");
  for (const auto& d : out.exemplars) {
    char mean[16];
    std::snprintf(mean, sizeof(mean), "%.2f", d.mean_overall);
    out.hints.push_back("model on " + d.candidate_id + " (mean overall " + mean + "): \"" + d.text + "\" [" +
                        d.length_band + ", " + std::to_string(d.words) + " words, " +
                        (d.imperative_lead ? "imperative lead" : "non-imperative lead") + ", " +
                        (d.metaphorical ? (*d.metaphorical ? "metaphorical" : "literal") : "unlabeled") +
                        ", punctuation " + d.punctuation + "]");
  }
  return out;
}

std::vector<ProfileRating> sampling_profile_analysis(const std::vector<RatingRecord>& ratings,
                                                     const std::vector<Candidate>& candidates,
                                                     const std::vector<gateway::SamplingProfile>& profiles) {
  std::map<std::string, std::string> method_of;
  for (const auto& c : candidates) method_of[c.id] = c.method;
  struct Acc {
    std::vector<double> means;
    std::size_t ratings = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& [id, t] : tally(ratings)) {
    auto it = method_of.find(id);
    if (it == method_of.end()) continue;
    auto& a = acc[it->second];
    a.means.push_back(static_cast<double>(t.overall) / static_cast<double>(t.n));
    a.ratings += t.n;
  }
  std::vector<ProfileRating> out;
  for (const auto& [name, a] : acc) {
    ProfileRating p;
    p.profile = name;
    p.candidates = a.means.size();
    p.ratings = a.ratings;
    p.mean_overall = mean_of(a.means);
    for (const auto& prof : profiles) {
      if (prof.name == name) {
        p.temperature = prof.temperature;
        p.top_p = prof.top_p;
      }
    }
    out.push_back(p);
  }
  return out;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json test_json(const stats::TTestResult& r) {
  return {{"t", r.t_statistic}, {"p", r.p_value}, {"df", r.degrees_of_freedom}, {"mean_a", r.mean_a}, {"mean_b", r.mean_b}};
}

}  // namespace

json to_json(const RatingAggregate& a) {
  json cands = json::array();
  for (const auto& c : a.candidates) {
    cands.push_back({{"candidate_id", c.candidate_id},
                     {"ratings", c.ratings},
                     {"mean_creativity", c.mean_creativity},
                     {"mean_expressiveness", c.mean_expressiveness},
                     {"mean_emotional_resonance", c.mean_emotional_resonance},
                     {"mean_overall_impact", c.mean_overall_impact},
                     {"mean_of_dimensions", c.mean_of_dimensions}});
  }
  json bins = json::array();
  for (const auto& b : a.histogram) bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"count", b.count}});
  return {{"candidates", cands},
          {"histogram", bins},
          {"fraction_at_least_4", a.fraction_at_least_4},
          {"rating_count", a.rating_count}};
}

json to_json(const MetaphorBreakdown& m) {
  json j{{"labeled", m.labeled},
         {"unlabeled", m.unlabeled},
         {"metaphorical", m.metaphorical},
         {"share_metaphorical", m.share_metaphorical},
         {"mean_metaphorical", opt(m.mean_metaphorical)},
         {"mean_literal", opt(m.mean_literal)}};
  j["test"] = m.test ? test_json(*m.test) : json(nullptr);
  if (!m.test) j["test_omitted_reason"] = m.test_omitted_reason;
  return j;
}

json to_json(const std::vector<Keyword>& k) {
  json out = json::array();
  for (const auto& w : k) out.push_back({{"term", w.term}, {"count", w.count}});
  return out;
}

json to_json(const PromptHints& h) {
  json ex = json::array();
  for (const auto& d : h.exemplars) {
    ex.push_back({{"candidate_id", d.candidate_id},
                  {"text", d.text},
                  {"mean_overall", d.mean_overall},
                  {"length_band", d.length_band},
                  {"words", d.words},
                  {"imperative_lead", d.imperative_lead},
                  {"metaphorical", d.metaphorical ? json(*d.metaphorical) : json(nullptr)},
                  {"punctuation", d.punctuation}});
  }
  json j{{"hints", h.hints}, {"exemplars", ex}};
  if (!h.reason.empty()) j["reason"] = h.reason;
  return j;
}

json to_json(const std::vector<ProfileRating>& p) {
  json out = json::array();
  for (const auto& r : p) {
    out.push_back({{"profile", r.profile},
                   {"candidates", r.candidates},
                   {"ratings", r.ratings},
                   {"mean_overall", r.mean_overall},
                   {"temperature", opt(r.temperature)},
                   {"top_p", opt(r.top_p)}});
  }
  return out;
}

json analytics_json(const std::vector<RatingRecord>& ratings, const std::vector<Candidate>& candidates,
                    const std::vector<gateway::SamplingProfile>& profiles) {
  json j;
  if (ratings.empty()) {
    j["aggregate"] = nullptr;
    j["aggregate_reason"] = "batch has no ratings";
  } else {
    j["aggregate"] = to_json(aggregate_ratings(ratings));
  }
  j["metaphor"] = to_json(metaphor_breakdown(ratings));
  j["keywords"] = to_json(keyword_frequencies(ratings));
  j["prompt_hints"] = to_json(derive_prompt_hints(ratings, candidates));
  j["profiles"] = to_json(sampling_profile_analysis(ratings, candidates, profiles));
  return j;
}

static const std::vector<std::string> kRatingColumns{
    "batch_id",       "rater_id",       "candidate_id",   "creativity", "expressiveness", "emotional_resonance",
    "overall_impact", "metaphor_label", "suggestion",     "submitted_at"};

std::string ratings_to_csv(const std::vector<std::pair<std::string, RatingRecord>>& rows) {
  std::string out;
  csv::append_row(out, kRatingColumns);
  for (const auto& [batch, r] : rows) {
    const std::vector<std::string> f{batch,
                                     r.rater_id,
                                     r.candidate_id,
                                     std::to_string(r.creativity),
                                     std::to_string(r.expressiveness),
                                     std::to_string(r.emotional_resonance),
                                     std::to_string(r.overall_impact),
                                     r.metaphor_label ? (*r.metaphor_label ? "true" : "false") : "",
                                     r.suggestion.value_or(""),
                                     r.submitted_at};
    csv::append_row(out, f);
  }
  return out;
}

std::vector<std::pair<std::string, RatingRecord>> ratings_from_csv(std::string_view data) {
  const auto rows = csv::parse(data);
  if (rows.empty() || rows.front() != kRatingColumns) {
    throw Error(ErrorCode::schema_mismatch, "ratings table header does not match the expected columns");
  }
  std::vector<std::pair<std::string, RatingRecord>> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != kRatingColumns.size()) throw Error(ErrorCode::schema_mismatch, "ratings row has wrong width");
    RatingRecord r;
    r.rater_id = f[1];
    r.candidate_id = f[2];
    try {
      r.creativity = std::stoi(f[3]);
      r.expressiveness = std::stoi(f[4]);
      r.emotional_resonance = std::stoi(f[5]);
      r.overall_impact = std::stoi(f[6]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::schema_mismatch, "ratings row has a non-integer score");
    }
    if (f[7] == "true") r.metaphor_label = true;
    if (f[7] == "false") r.metaphor_label = false;
    if (!f[8].empty()) r.suggestion = f[8];
    r.submitted_at = f[9];
    out.emplace_back(f[0], std::move(r));
  }
  return out;
}

FeedbackHub::FeedbackHub(store::RunStore& store) : store_(store) {}

FeedbackHub::RunState& FeedbackHub::load_run(const std::string& run_id) const {
  if (auto it = runs_.find(run_id); it != runs_.end()) return it->second;
  if (!store_.has_run(run_id)) throw Error(ErrorCode::not_found, "unknown run: " + run_id);
  RunState st;
  if (auto data = store_.read_file(run_id, "batches.json")) {
    try {
      const auto doc = json::parse(*data);
      for (const auto& b : doc.at("batches")) st.batches.push_back(batch_from_json(b));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::schema_mismatch, std::string("batches.json: ") + e.what());
    }
  }
  if (auto data = store_.read_file(run_id, "ratings.csv")) {
    for (auto& [batch, r] : ratings_from_csv(*data)) {
      st.ratings[batch][{r.candidate_id, r.rater_id}] = std::move(r);
    }
  }
  return runs_.emplace(run_id, std::move(st)).first->second;
}

std::string FeedbackHub::run_of_batch(const std::string& batch_id) const {
  const auto pos = batch_id.rfind("-b");
  if (pos == std::string::npos || pos == 0) throw Error(ErrorCode::not_found, "unknown batch: " + batch_id);
  return batch_id.substr(0, pos);
}

RatingBatch& FeedbackHub::batch_ref(RunState& st, const std::string& batch_id) const {
  for (auto& b : st.batches) {
    if (b.batch_id == batch_id) return b;
  }
  throw Error(ErrorCode::not_found, "unknown batch: " + batch_id);
}

void FeedbackHub::persist(const std::string& run_id, const RunState& st) {
  json batches = json::array();
  for (const auto& b : st.batches) batches.push_back(to_json(b));
  std::vector<std::pair<std::string, RatingRecord>> rows;
  for (const auto& [batch, recs] : st.ratings) {
    for (const auto& [key, r] : recs) rows.emplace_back(batch, r);
  }
  store_.write_file(run_id, "ratings.csv", ratings_to_csv(rows));
  store_.write_file(run_id, "batches.json", json{{"batches", batches}}.dump(2) + "\n");
}

RatingBatch FeedbackHub::create_batch(const std::string& run_id, std::optional<std::vector<std::string>> candidate_ids,
                                      int raters_expected) {
  std::lock_guard lk(mu_);
  auto& st = load_run(run_id);
  if (raters_expected < 1) throw Error(ErrorCode::invalid_argument, "raters_expected must be >= 1");
  const auto all = store_.load_candidates(run_id);
  std::set<std::string> known;
  for (const auto& c : all) known.insert(c.id);
  std::vector<std::string> ids;
  if (candidate_ids) {
    std::set<std::string> seen;
    for (const auto& id : *candidate_ids) {
      if (!known.count(id)) throw Error(ErrorCode::invalid_argument, "candidate " + id + " is not in run " + run_id);
      if (!seen.insert(id).second) throw Error(ErrorCode::invalid_argument, "candidate " + id + " listed twice");
      ids.push_back(id);
    }
  } else {
    for (Stage s : {Stage::T, Stage::R}) {
      for (const auto& c : all) {
        if (c.stage == s) ids.push_back(c.id);
      }
      if (!ids.empty()) break;
    }
  }
  if (ids.empty()) throw Error(ErrorCode::invalid_argument, "a batch needs at least one candidate");
  char suffix[16];
  std::snprintf(suffix, sizeof(suffix), "-b%04zu", st.batches.size() + 1);
  RatingBatch b;
  b.batch_id = run_id + suffix;
  b.run_id = run_id;
  b.candidate_ids = std::move(ids);
  b.raters_expected = raters_expected;
  b.created_at = text::utc_timestamp_now();
  st.batches.push_back(b);
  persist(run_id, st);
  return b;
}

std::optional<RatingBatch> FeedbackHub::get_batch(const std::string& batch_id) const {
  std::lock_guard lk(mu_);
  try {
    auto& st = load_run(run_of_batch(batch_id));
    return batch_ref(st, batch_id);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::not_found) return std::nullopt;
    throw;
  }
}

std::vector<RatingBatch> FeedbackHub::list_batches(const std::string& run_id) const {
  std::lock_guard lk(mu_);
  return load_run(run_id).batches;
}

RatingBatch FeedbackHub::close_batch(const std::string& batch_id) {
  std::lock_guard lk(mu_);
  const auto run_id = run_of_batch(batch_id);
  auto& st = load_run(run_id);
  auto& b = batch_ref(st, batch_id);
  if (b.status != BatchStatus::closed) {
    b.status = BatchStatus::closed;
    persist(run_id, st);
  }
  return b;
}

SubmitResult FeedbackHub::submit_rating(const std::string& batch_id, RatingRecord r) {
  std::lock_guard lk(mu_);
  const auto run_id = run_of_batch(batch_id);
  auto& st = load_run(run_id);
  auto& b = batch_ref(st, batch_id);
  if (b.status == BatchStatus::closed) throw Error(ErrorCode::conflict, "batch " + batch_id + " is closed");
  r.validate();
  if (std::find(b.candidate_ids.begin(), b.candidate_ids.end(), r.candidate_id) == b.candidate_ids.end()) {
    throw Error(ErrorCode::invalid_argument, "candidate " + r.candidate_id + " is not in batch " + batch_id);
  }
  if (r.submitted_at.empty()) r.submitted_at = text::utc_timestamp_now();
  auto& recs = st.ratings[batch_id];
  SubmitResult res;
  res.replaced = recs.count({r.candidate_id, r.rater_id}) > 0;
  recs[{r.candidate_id, r.rater_id}] = std::move(r);
  res.ratings_in_batch = recs.size();
  persist(run_id, st);
  return res;
}

std::optional<std::string> FeedbackHub::next_for_rater(const std::string& batch_id, const std::string& rater_id) const {
  std::lock_guard lk(mu_);
  auto& st = load_run(run_of_batch(batch_id));
  const auto& b = batch_ref(st, batch_id);
  const auto it = st.ratings.find(batch_id);
  for (const auto& id : b.candidate_ids) {
    if (it == st.ratings.end() || !it->second.count({id, rater_id})) return id;
  }
  return std::nullopt;
}

std::vector<RatingRecord> FeedbackHub::ratings(const std::string& batch_id) const {
  std::lock_guard lk(mu_);
  auto& st = load_run(run_of_batch(batch_id));
  batch_ref(st, batch_id);
  std::vector<RatingRecord> out;
  if (auto it = st.ratings.find(batch_id); it != st.ratings.end()) {
    for (const auto& [key, r] : it->second) out.push_back(r);
  }
  return out;
}

json FeedbackHub::analytics(const std::string& batch_id) const {
  const auto recs = ratings(batch_id);
  const auto b = get_batch(batch_id);
  const auto candidates = store_.load_candidates(b->run_id);
  std::vector<gateway::SamplingProfile> profiles = gateway::profiles::defaults();
  // A run without a readable snapshot falls back to the default profile table.
  try {
    profiles = pipeline_config_from_json(store_.load_config(b->run_id)).profiles;
  } catch (const Error&) {
  }
  auto j = analytics_json(recs, candidates, profiles);
  j["batch"] = to_json(*b);
  return j;
}

}  // namespace earth::feedback
