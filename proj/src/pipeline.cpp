#include "earth/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "earth/csv.hpp"
#include "earth/error.hpp"
#include "earth/report.hpp"
#include "earth/run_store.hpp"
#include "earth/text.hpp"

namespace earth::pipeline {

namespace {

using scoring::RelevanceMethod;
using scoring::ScoreBreakdown;

std::string make_id(Stage stage, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%04zu", std::string(to_string(stage)).c_str(), index);
  return buf;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double pct_change(double before, double after) {
  if (before == 0.0) return 0.0;
  return (after - before) / std::abs(before) * 100.0;
}

bool icase_prefix(std::string_view s, std::string_view prefix) { return text::starts_with_icase(s, prefix); }

// Removes one leading prefix from the list; returns true when something was removed.
bool strip_prefix(std::string& s, std::initializer_list<std::string_view> prefixes) {
  for (auto p : prefixes) {
    if (icase_prefix(s, p)) {
      s = text::trim(s.substr(p.size()));
      return true;
    }
  }
  return false;
}

constexpr std::string_view kOpenQuotes[] = {"\"", "'", "“", "‘", "«"};
constexpr std::string_view kCloseQuotes[] = {"\"", "'", "”", "’", "»"};

void strip_quotes(std::string& s) {
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    for (std::size_t i = 0; i < std::size(kOpenQuotes); ++i) {
      const auto open = kOpenQuotes[i];
      if (s.size() >= open.size() && s.compare(0, open.size(), open) == 0) {
        s = text::trim(s.substr(open.size()));
        changed = true;
        break;
      }
    }
    for (std::size_t i = 0; i < std::size(kCloseQuotes); ++i) {
      const auto close = kCloseQuotes[i];
      if (s.size() >= close.size() && s.compare(s.size() - close.size(), close.size(), close) == 0) {
        s = text::trim(s.substr(0, s.size() - close.size()));
        changed = true;
        break;
      }
    }
  }
}

std::string clean_line(std::string line) {
  line = text::trim(line);
  strip_prefix(line, {"Sure!", "Sure,", "Sure.", "Certainly!", "Certainly,", "Of course!", "Of course,", "Okay,"});
  // "Here's ..." and "Here is ..." only count as a lead-in when a colon ends it.
  if (icase_prefix(line, "Here's") || icase_prefix(line, "Here is") || icase_prefix(line, "Here’s")) {
    if (auto colon = line.find(':'); colon != std::string::npos) line = text::trim(line.substr(colon + 1));
  }
  strip_prefix(line, {"Final slogan:", "Refined slogan:", "Slogan:", "Tagline:"});
  strip_quotes(line);
  return line;
}

struct GenerationOutcome {
  std::vector<gateway::GenerationResult> results;
  std::string error;
};

GenerationOutcome generate_safely(const gateway::Gateway& gw, const std::string& system, const std::string& user,
                                  const gateway::SamplingProfile& profile) {
  GenerationOutcome out;
  try {
    out.results = gw.generate(system, user, profile);
  } catch (const Error& e) {
    out.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  return out;
}

std::string default_clock() { return text::utc_timestamp_now(); }

}  // namespace

std::string theme_prompt(const std::string& theme) {
  return "Write a short, memorable advertising slogan for the theme \"" + theme + "\".";
}

std::string refine_prompt(const std::string& tagline) {
  return std::string(kRefineInstruction) + "\nTagline: " + tagline;
}

std::string image_prompt(const std::string& slogan) {
  return "Illustration for the slogan: “" + slogan +
         "”. Depict the concept visually without any text. Ultra-detailed, cinematic lighting.";
}

std::string clean_slogan(std::string_view raw) {
  for (const auto& line : text::split_lines(raw)) {
    const auto trimmed = text::trim(line);
    if (icase_prefix(trimmed, "Explanation:") || icase_prefix(trimmed, "Note:")) continue;
    auto cleaned = clean_line(trimmed);
    if (!cleaned.empty()) return cleaned;
  }
  return "";
}

void Lineage::add(const std::vector<Candidate>& cs) {
  for (const auto& c : cs) by_id_.insert_or_assign(c.id, c);
}

const Candidate* Lineage::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

const Candidate& Lineage::root(const Candidate& c) const {
  const Candidate* cur = &c;
  for (std::size_t hops = 0; cur->stage != Stage::E; ++hops) {
    if (!cur->parent_id || hops > by_id_.size()) {
      throw Error(ErrorCode::not_found, "candidate " + c.id + " has no resolvable E-stage root");
    }
    cur = find(*cur->parent_id);
    if (!cur) throw Error(ErrorCode::not_found, "unresolvable parent for candidate " + c.id);
  }
  return *cur;
}

CompressionStats compression_stats(const std::vector<Candidate>& before, const std::vector<Candidate>& after) {
  std::map<std::string, const Candidate*> src;
  for (const auto& b : before) src[b.id] = &b;
  std::vector<double> lb, la, nb, na, rb, ra;
  for (const auto& a : after) {
    if (!a.parent_id) continue;
    auto it = src.find(*a.parent_id);
    if (it == src.end()) continue;
    const Candidate& b = *it->second;
    lb.push_back(static_cast<double>(text::char_length(b.text)));
    la.push_back(static_cast<double>(text::char_length(a.text)));
    if (b.scores && a.scores) {
      nb.push_back(b.scores->novelty);
      na.push_back(a.scores->novelty);
      rb.push_back(b.scores->relevance);
      ra.push_back(a.scores->relevance);
    }
  }
  CompressionStats s;
  s.mean_length_before = mean_of(lb);
  s.mean_length_after = mean_of(la);
  s.length_change_pct = pct_change(s.mean_length_before, s.mean_length_after);
  s.mean_novelty_before = mean_of(nb);
  s.mean_novelty_after = mean_of(na);
  s.novelty_change_pct = pct_change(s.mean_novelty_before, s.mean_novelty_after);
  s.mean_relevance_before = mean_of(rb);
  s.mean_relevance_after = mean_of(ra);
  s.relevance_change_pct = pct_change(s.mean_relevance_before, s.mean_relevance_after);
  return s;
}

StageComparison stage_comparison(const std::vector<Candidate>& all, const std::string& std_method,
                                 const std::string& err_method) {
  const std::vector<std::string> names{"Std", "Err", "R", "T"};
  std::map<std::string, std::vector<double>> values;
  for (const auto& c : all) {
    if (!c.scores) continue;
    const double v = scoring::r_score(c.scores->novelty, c.scores->surprise, c.scores->relevance);
    if (c.stage == Stage::E && c.method == std_method) values["Std"].push_back(v);
    if (c.stage == Stage::E && c.method == err_method) values["Err"].push_back(v);
    if (c.stage == Stage::R) values["R"].push_back(v);
    if (c.stage == Stage::T) values["T"].push_back(v);
  }
  StageComparison out;
  std::size_t usable = 0;
  for (const auto& n : names) {
    GroupSummary g;
    g.name = n;
    const auto& xs = values[n];
    g.n = xs.size();
    if (!xs.empty()) {
      const auto d = stats::descriptive_stats(xs);
      g.mean = d.mean;
      g.sd = d.sd;
    }
    if (g.n >= 2) ++usable;
    out.groups.push_back(g);
  }
  if (usable < 2) throw Error(ErrorCode::invalid_argument, "stage comparison needs at least two groups with >= 2 members");

  const std::pair<std::string, std::string> pairs[] = {{"Std", "Err"}, {"Err", "R"}, {"Std", "T"}, {"R", "T"}};
  for (const auto& [from, to] : pairs) {
    ComparisonTest t;
    t.name = from + "->" + to;
    t.from = from;
    t.to = to;
    const auto& a = values[from];
    const auto& b = values[to];
    if (a.size() < 2 || b.size() < 2) {
      t.omitted_reason = "group has fewer than 2 members";
    } else {
      try {
        t.result = stats::welch_t_test(a, b);
      } catch (const Error& e) {
        t.omitted_reason = e.what();
      }
    }
    out.tests.push_back(std::move(t));
  }
  return out;
}

namespace {

nlohmann::json test_json(const stats::TTestResult& r) {
  return {{"t", r.t_statistic},
          {"p", r.p_value},
          {"df", r.degrees_of_freedom},
          {"mean_a", r.mean_a},
          {"mean_b", r.mean_b}};
}

}  // namespace

nlohmann::json to_json(const StageComparison& c) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : c.groups) groups.push_back({{"name", g.name}, {"n", g.n}, {"mean", g.mean}, {"sd", g.sd}});
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : c.tests) {
    nlohmann::json j{{"name", t.name}, {"from", t.from}, {"to", t.to}};
    if (t.result) {
      j["result"] = test_json(*t.result);
    } else {
      j["result"] = nullptr;
      j["omitted_reason"] = t.omitted_reason;
    }
    tests.push_back(std::move(j));
  }
  return {{"groups", groups}, {"tests", tests}};
}

nlohmann::json to_json(const CompressionStats& c) {
  return {{"mean_length_before", c.mean_length_before},     {"mean_length_after", c.mean_length_after},
          {"length_change_pct", c.length_change_pct},       {"mean_novelty_before", c.mean_novelty_before},
          {"mean_novelty_after", c.mean_novelty_after},     {"novelty_change_pct", c.novelty_change_pct},
          {"mean_relevance_before", c.mean_relevance_before}, {"mean_relevance_after", c.mean_relevance_after},
          {"relevance_change_pct", c.relevance_change_pct}};
}

nlohmann::json to_json(const stats::LengthDeltaSummary& s) {
  nlohmann::json j{{"count", s.deltas.size()}, {"mean_delta", s.mean_delta}, {"sd_delta", s.sd_delta}};
  if (s.test) {
    j["test"] = test_json(*s.test);
  } else {
    j["test"] = nullptr;
    j["test_omitted_reason"] = s.test_omitted_reason;
  }
  return j;
}

Engine::Engine(PipelineConfig cfg, const gateway::Gateway& gw, std::function<std::string()> clock)
    : cfg_(std::move(cfg)), gw_(gw), clock_(clock ? std::move(clock) : default_clock) {
  cfg_.validate();
}

gateway::SamplingProfile Engine::profile_with_variants(const std::string& name, int variants) const {
  auto p = cfg_.profile(name);
  p.variants = variants;
  return p;
}

std::string Engine::reference_for(Stage stage, const Candidate& root) const {
  auto it = cfg_.reference.find(stage);
  const auto kind = it == cfg_.reference.end() ? ReferenceKind::seed : it->second;
  return kind == ReferenceKind::theme_prompt ? root.prompt : root.text;
}

std::pair<double, RelevanceMethod> Engine::relevance(const std::string& text, const std::string& reference) const {
  if (gw_.has_pair_relevance()) {
    if (auto v = gw_.pair_relevance(text, reference)) return {*v, RelevanceMethod::backend_pair_score};
  }
  if (gw_.has_token_embeddings()) {
    const auto cand = gw_.embed_tokens(text);
    const auto ref = gw_.embed_tokens(reference);
    if (!cand.empty() && !ref.empty()) {
      return {scoring::greedy_match_f1(cand, ref), RelevanceMethod::greedy_token_f1};
    }
  }
  return {scoring::sentence_relevance_fallback(gw_.embed_sentence(text), gw_.embed_sentence(reference)),
          RelevanceMethod::sentence_cosine_fallback};
}

ScoreBreakdown Engine::score(const std::string& text, const std::string& reference, double surprise) const {
  const double n = scoring::novelty(gw_.embed_sentence(reference), gw_.embed_sentence(text));
  const double d = scoring::js_divergence(scoring::token_distribution(reference), scoring::token_distribution(text));
  const auto [r, method] = relevance(text, reference);
  return ScoreBreakdown::compose(n, surprise, d, r, method, cfg_.t_weights);
}

StageOutput Engine::run_stage_e() const {
  struct Job {
    std::string theme;
    std::string method;
  };
  std::vector<Job> jobs;
  for (const auto& theme : cfg_.themes) {
    for (const auto& m : cfg_.e_methods) jobs.push_back({theme, m});
  }

  struct Scored {
    std::string text;
    std::optional<ScoreBreakdown> scores;
    std::string skip;
  };
  struct JobResult {
    std::vector<Scored> items;
    std::string error;
  };
  const std::string system(kCopywriterSystemPrompt);
  const std::function<JobResult(std::size_t)> fn = [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto prompt = theme_prompt(job.theme);
    JobResult jr;
    auto gen = generate_safely(gw_, system, prompt, cfg_.profile(job.method));
    jr.error = gen.error;
    for (const auto& g : gen.results) {
      Scored s;
      s.text = clean_slogan(g.text);
      if (s.text.empty()) {
        s.skip = "empty after cleaning";
      } else {
        try {
          s.scores = score(s.text, prompt, scoring::surprise(g.token_logprobs));
        } catch (const Error& e) {
          s.skip = std::string("unscorable: ") + e.what();
        }
      }
      jr.items.push_back(std::move(s));
    }
    return jr;
  };
  auto results = parallel_map<JobResult>(jobs.size(), gw_.options().max_concurrency, fn);

  StageOutput out;
  out.report.stage = Stage::E;
  out.report.selection_rule = "all cleaned generations per theme x profile";
  std::size_t requested = 0;
  std::size_t skipped = 0;
  std::map<std::string, std::size_t> survivors;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& job = jobs[i];
    const auto& jr = results[i];
    const auto want = static_cast<std::size_t>(cfg_.profile(job.method).variants);
    requested += want;
    if (!jr.error.empty()) {
      skipped += want;
      out.report.notes.push_back("theme '" + job.theme + "' profile " + job.method + ": generation failed (" + jr.error + ")");
      continue;
    }
    for (std::size_t v = 0; v < jr.items.size(); ++v) {
      const auto& s = jr.items[v];
      if (!s.scores) {
        ++skipped;
        out.report.notes.push_back("theme '" + job.theme + "' profile " + job.method + " variant " +
                                   std::to_string(v + 1) + " skipped: " + s.skip);
        continue;
      }
      Candidate c;
      c.id = make_id(Stage::E, out.candidates.size() + 1);
      c.stage = Stage::E;
      c.method = job.method;
      c.theme = job.theme;
      c.prompt = theme_prompt(job.theme);
      c.text = s.text;
      c.scores = s.scores;
      c.created_at = clock_();
      out.candidates.push_back(std::move(c));
      ++survivors[job.theme];
    }
  }
  for (const auto& theme : cfg_.themes) {
    if (survivors[theme] == 0) {
      std::string diag = "stage E: theme '" + theme + "' produced no usable candidates";
      for (const auto& n : out.report.notes) diag += "; " + n;
      throw Error(ErrorCode::empty_generation, diag);
    }
  }
  out.report.input_count = requested;
  out.report.output_count = out.candidates.size();
  out.report.statistics = {{"requested", static_cast<double>(requested)},
                           {"skipped", static_cast<double>(skipped)},
                           {"themes", static_cast<double>(cfg_.themes.size())}};
  for (const auto& m : cfg_.e_methods) {
    std::vector<double> ca;
    for (const auto& c : out.candidates) {
      if (c.method == m) ca.push_back(c.scores->creativity_a);
    }
    out.report.statistics.push_back({"count_" + m, static_cast<double>(ca.size())});
    out.report.statistics.push_back({"mean_creativity_a_" + m, mean_of(ca)});
  }
  return out;
}

std::vector<Candidate> Engine::select_seeds(const std::vector<Candidate>& e_candidates) const {
  std::vector<Candidate> pool;
  for (const auto& c : e_candidates) {
    if (c.stage == Stage::E && c.method == cfg_.seed_method) {
      if (!c.scores) throw Error(ErrorCode::invalid_argument, "seed candidate " + c.id + " has no scores");
      pool.push_back(c);
    }
  }
  const auto k = static_cast<std::size_t>(cfg_.seeds_k);
  if (pool.size() < k) {
    throw Error(ErrorCode::invalid_argument, "seeds_k=" + std::to_string(k) + " exceeds the " +
                                                 std::to_string(pool.size()) + " '" + cfg_.seed_method +
                                                 "' candidates");
  }
  const auto order = scoring::rank_top_k(
      std::span<const Candidate>(pool), k, [](const Candidate& c) { return c.scores->creativity_a; },
      [](const Candidate& c) { return c.id; });
  std::vector<Candidate> seeds;
  seeds.reserve(order.size());
  for (auto i : order) seeds.push_back(pool[i]);
  return seeds;
}

StageOutput Engine::run_stage_a(const std::vector<Candidate>& seeds) const {
  if (seeds.empty()) throw Error(ErrorCode::invalid_argument, "stage A needs at least one seed");
  const auto profile = profile_with_variants(cfg_.amplify_profile, cfg_.variants_per_seed);
  const std::string system(kAmplifySystemPrompt);

  struct Scored {
    std::string text;
    std::optional<ScoreBreakdown> scores;
    std::string skip;
  };
  struct SeedResult {
    std::vector<Scored> items;
    std::string error;
  };
  const std::function<SeedResult(std::size_t)> fn = [&](std::size_t i) {
    const auto& seed = seeds[i];
    SeedResult sr;
    auto gen = generate_safely(gw_, system, seed.text, profile);
    sr.error = gen.error;
    const auto reference = reference_for(Stage::A, seed);
    for (const auto& g : gen.results) {
      Scored s;
      s.text = clean_slogan(g.text);
      if (s.text.empty()) {
        s.skip = "empty after cleaning";
      } else {
        try {
          s.scores = score(s.text, reference, scoring::surprise(g.token_logprobs));
        } catch (const Error& e) {
          s.skip = std::string("unscorable: ") + e.what();
        }
      }
      sr.items.push_back(std::move(s));
    }
    return sr;
  };
  auto results = parallel_map<SeedResult>(seeds.size(), gw_.options().max_concurrency, fn);

  StageOutput out;
  out.report.stage = Stage::A;
  out.report.input_count = seeds.size();
  out.report.selection_rule = "top " + std::to_string(cfg_.seeds_k) + " '" + cfg_.seed_method +
                              "' candidates by creativity_a, then " + std::to_string(cfg_.variants_per_seed) +
                              " amplified variants per seed";
  std::size_t skipped = 0;
  std::size_t skipped_seeds = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& seed = seeds[i];
    const auto& sr = results[i];
    std::size_t kept = 0;
    if (!sr.error.empty()) {
      skipped += static_cast<std::size_t>(profile.variants);
      out.report.notes.push_back("seed " + seed.id + ": generation failed (" + sr.error + ")");
    }
    for (std::size_t v = 0; v < sr.items.size(); ++v) {
      const auto& s = sr.items[v];
      if (!s.scores) {
        ++skipped;
        out.report.notes.push_back("seed " + seed.id + " variant " + std::to_string(v + 1) + " skipped: " + s.skip);
        continue;
      }
      Candidate c;
      c.id = make_id(Stage::A, out.candidates.size() + 1);
      c.stage = Stage::A;
      c.method = profile.name;
      c.theme = seed.theme;
      c.prompt = seed.text;
      c.parent_id = seed.id;
      c.text = s.text;
      c.scores = s.scores;
      c.created_at = clock_();
      out.candidates.push_back(std::move(c));
      ++kept;
    }
    if (kept == 0) {
      ++skipped_seeds;
      out.report.notes.push_back("seed " + seed.id + " yielded no surviving variants and was skipped");
    }
  }
  out.report.output_count = out.candidates.size();
  std::vector<double> seed_scores;
  for (const auto& s : seeds) seed_scores.push_back(s.scores ? s.scores->creativity_a : 0.0);
  std::vector<double> ca;
  for (const auto& c : out.candidates) ca.push_back(c.scores->creativity_a);
  out.report.statistics = {{"requested", static_cast<double>(seeds.size() * static_cast<std::size_t>(profile.variants))},
                           {"skipped", static_cast<double>(skipped)},
                           {"skipped_seeds", static_cast<double>(skipped_seeds)},
                           {"mean_seed_creativity_a", mean_of(seed_scores)},
                           {"mean_variant_creativity_a", mean_of(ca)}};
  return out;
}

RStageOutput Engine::run_stage_r(const std::vector<Candidate>& variants, const Lineage& lineage) const {
  RStageOutput out;
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& v : variants) {
    if (!v.scores) throw Error(ErrorCode::invalid_argument, "variant " + v.id + " has no scores");
    const auto& root = lineage.root(v);
    pairs.emplace_back(root.text, v.text);
    out.scored_inputs.push_back(v);
  }
  const auto k = static_cast<std::size_t>(cfg_.refine_top_k);
  const auto order = scoring::rank_top_k(
      std::span<const Candidate>(out.scored_inputs), k, [](const Candidate& c) { return c.scores->r_score; },
      [](const Candidate& c) { return c.id; });

  std::vector<bool> chosen(out.scored_inputs.size(), false);
  for (auto i : order) {
    chosen[i] = true;
    const auto& src = out.scored_inputs[i];
    Candidate c = src;
    c.id = make_id(Stage::R, out.selected.size() + 1);
    c.stage = Stage::R;
    c.parent_id = src.id;
    c.created_at = clock_();
    out.selected.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < out.scored_inputs.size(); ++i) {
    const auto& v = out.scored_inputs[i];
    out.scatter.push_back({v.id, v.parent_id.value_or(""), v.scores->novelty, v.scores->surprise,
                           v.scores->relevance, v.scores->r_score, chosen[i]});
  }
  out.length_delta = stats::length_delta_stats(pairs);

  out.report.stage = Stage::R;
  out.report.input_count = variants.size();
  out.report.output_count = out.selected.size();
  out.report.selection_rule = "top " + std::to_string(k) + " by r_score (descending, id ascending on ties)";
  std::vector<double> all_r, sel_r;
  for (const auto& v : out.scored_inputs) all_r.push_back(v.scores->r_score);
  for (const auto& c : out.selected) sel_r.push_back(c.scores->r_score);
  out.report.statistics = {{"mean_r_score_inputs", mean_of(all_r)},
                           {"mean_r_score_selected", mean_of(sel_r)},
                           {"length_delta_mean", out.length_delta.mean_delta},
                           {"length_delta_sd", out.length_delta.sd_delta}};
  if (out.length_delta.test) {
    out.report.statistics.push_back({"length_delta_t", out.length_delta.test->t_statistic});
    out.report.statistics.push_back({"length_delta_p", out.length_delta.test->p_value});
  } else {
    out.report.notes.push_back("length-delta test omitted: " + out.length_delta.test_omitted_reason);
  }
  return out;
}

TStageOutput Engine::run_stage_t(const std::vector<Candidate>& inputs, const Lineage& lineage) const {
  if (inputs.empty()) throw Error(ErrorCode::invalid_argument, "stage T needs at least one input");
  const auto profile = profile_with_variants(cfg_.refine_profile, cfg_.refine_candidates);
  const std::string system(kCopywriterSystemPrompt);

  struct Rewrite {
    std::string text;
    ScoreBreakdown scores;
  };
  struct InputResult {
    std::vector<Rewrite> rewrites;
    std::size_t discarded = 0;
    std::string error;
  };
  std::vector<const Candidate*> roots;
  for (const auto& in : inputs) roots.push_back(&lineage.root(in));

  const std::function<InputResult(std::size_t)> fn = [&](std::size_t i) {
    InputResult ir;
    auto gen = generate_safely(gw_, system, refine_prompt(inputs[i].text), profile);
    ir.error = gen.error;
    const auto reference = reference_for(Stage::T, *roots[i]);
    for (const auto& g : gen.results) {
      auto cleaned = clean_slogan(g.text);
      if (cleaned.empty()) {
        ++ir.discarded;
        continue;
      }
      try {
        ir.rewrites.push_back({cleaned, score(cleaned, reference, scoring::surprise(g.token_logprobs))});
      } catch (const Error&) {
        ++ir.discarded;
      }
    }
    return ir;
  };
  auto results = parallel_map<InputResult>(inputs.size(), gw_.options().max_concurrency, fn);

  TStageOutput out;
  std::size_t unrefined = 0;
  std::size_t discarded = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    const auto& ir = results[i];
    discarded += ir.discarded;
    Candidate c;
    c.id = make_id(Stage::T, out.finals.size() + 1);
    c.stage = Stage::T;
    c.method = profile.name;
    c.theme = in.theme;
    c.prompt = refine_prompt(in.text);
    c.parent_id = in.id;
    c.created_at = clock_();
    if (ir.rewrites.empty()) {
      ++unrefined;
      c.text = in.text;
      c.scores = in.scores;
      c.flag = "unrefined";
      out.report.notes.push_back("input " + in.id + " kept unrefined: " +
                                 (ir.error.empty() ? "all rewrites eliminated by cleaning" : ir.error));
    } else {
      std::size_t best = 0;
      for (std::size_t r = 1; r < ir.rewrites.size(); ++r) {
        if (ir.rewrites[r].scores.t_score > ir.rewrites[best].scores.t_score) best = r;
      }
      c.text = ir.rewrites[best].text;
      c.scores = ir.rewrites[best].scores;
    }
    out.finals.push_back(std::move(c));
  }
  out.compression = compression_stats(inputs, out.finals);

  out.report.stage = Stage::T;
  out.report.input_count = inputs.size();
  out.report.output_count = out.finals.size();
  out.report.selection_rule = "argmax t_score over " + std::to_string(profile.variants) +
                              " rewrites per input (lower rewrite index on ties)";
  out.report.statistics = {{"unrefined", static_cast<double>(unrefined)},
                           {"discarded_rewrites", static_cast<double>(discarded)},
                           {"length_change_pct", out.compression.length_change_pct},
                           {"novelty_change_pct", out.compression.novelty_change_pct},
                           {"relevance_change_pct", out.compression.relevance_change_pct}};
  return out;
}

CrossmodalOutput Engine::run_stage_t_crossmodal(const std::vector<Candidate>& finals) const {
  CrossmodalOutput out;
  if (!cfg_.crossmodal_enabled) {
    out.skipped = true;
    out.skip_reason = "cross-modal stage disabled in config";
    return out;
  }
  if (auto reason = gw_.crossmodal_unavailable_reason()) {
    out.skipped = true;
    out.skip_reason = *reason;
    return out;
  }
  struct ItemResult {
    std::optional<CrossmodalItem> item;
    std::string error;
  };
  const std::function<ItemResult(std::size_t)> fn = [&](std::size_t i) {
    ItemResult r;
    try {
      CrossmodalItem item;
      item.candidate = finals[i];
      item.image = gw_.generate_image(image_prompt(finals[i].text));
      item.similarity = gw_.image_text_similarity(item.image, finals[i].text);
      item.caption = gw_.caption_image(item.image);
      std::tie(item.caption_f1, item.caption_method) = relevance(item.caption, finals[i].text);
      r.item = std::move(item);
    } catch (const Error& e) {
      r.error = e.what();
    }
    return r;
  };
  auto results = parallel_map<ItemResult>(finals.size(), gw_.options().max_concurrency, fn);
  std::vector<double> sims, f1s;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].item) {
      failures.push_back(finals[i].id + ": " + results[i].error);
      continue;
    }
    sims.push_back(results[i].item->similarity);
    f1s.push_back(results[i].item->caption_f1);
    out.items.push_back(std::move(*results[i].item));
  }
  if (out.items.empty() && !finals.empty()) {
    out.skipped = true;
    out.skip_reason = "every cross-modal item failed";
    for (const auto& f : failures) out.skip_reason += "; " + f;
    return out;
  }
  if (!failures.empty()) {
    out.skip_reason = std::to_string(failures.size()) + " item(s) failed";
    for (const auto& f : failures) out.skip_reason += "; " + f;
  }
  out.mean_similarity = mean_of(sims);
  out.mean_caption_f1 = mean_of(f1s);
  return out;
}

namespace {

std::string crossmodal_csv(const CrossmodalOutput& cm) {
  std::string out;
  const std::vector<std::string> header{"id", "text", "image", "similarity", "caption", "caption_f1", "caption_method"};
  csv::append_row(out, header);
  for (const auto& it : cm.items) {
    const std::vector<std::string> row{it.candidate.id,
                                       it.candidate.text,
                                       "images/" + it.candidate.id + "." + it.image.format,
                                       csv::format_double(it.similarity),
                                       it.caption,
                                       csv::format_double(it.caption_f1),
                                       std::string(scoring::to_string(it.caption_method))};
    csv::append_row(out, row);
  }
  return out;
}

}  // namespace

store::RunManifest run_full_pipeline(const PipelineConfig& cfg, const gateway::Gateway& gw, store::RunStore& store,
                                     const RunOptions& options) {
  auto clock = options.clock ? options.clock : std::function<std::string()>(default_clock);
  store::RunManifest m;
  m.config = options.config_snapshot.is_null() ? to_json(cfg) : options.config_snapshot;
  m.run_id = store.create_run(m.config);
  m.created_at = clock();
  m.backends = gw.identities();
  m.run_seed = cfg.run_seed;
  m.status = store::RunStatus::running;
  auto add_artifact = [&](const std::string& rel) {
    if (std::find(m.artifacts.begin(), m.artifacts.end(), rel) == m.artifacts.end()) m.artifacts.push_back(rel);
  };
  add_artifact("config.json");
  add_artifact("manifest.json");
  store.write_manifest(m);

  auto persist = [&](Stage s, const std::vector<Candidate>& cs) {
    store.append_candidates(m.run_id, s, cs);
    add_artifact("candidates_" + std::string(to_string(s)) + ".csv");
    add_artifact("candidates.jsonl");
  };
  auto stopped = [&](Stage s) { return options.stop_after && *options.stop_after == s; };

  try {
    Engine engine(cfg, gw, clock);
    Lineage lineage;

    auto e = engine.run_stage_e();
    persist(Stage::E, e.candidates);
    lineage.add(e.candidates);
    m.stage_reports.push_back(e.report);
    if (!stopped(Stage::E)) {
      auto seeds = engine.select_seeds(e.candidates);
      auto a = engine.run_stage_a(seeds);
      std::string seed_ids;
      for (const auto& s : seeds) seed_ids += (seed_ids.empty() ? "" : ",") + s.id;
      a.report.notes.insert(a.report.notes.begin(), "seeds: " + seed_ids);
      persist(Stage::A, a.candidates);
      lineage.add(a.candidates);
      m.stage_reports.push_back(a.report);
      if (!stopped(Stage::A)) {
        auto r = engine.run_stage_r(a.candidates, lineage);
        persist(Stage::R, r.selected);
        lineage.add(r.selected);
        m.stage_reports.push_back(r.report);
        if (!stopped(Stage::R)) {
          auto t = engine.run_stage_t(r.selected, lineage);
          persist(Stage::T, t.finals);
          m.stage_reports.push_back(t.report);
          auto cm = engine.run_stage_t_crossmodal(t.finals);
          if (cm.skipped) {
            m.notes.push_back("cross-modal skipped: " + cm.skip_reason);
          } else {
            for (const auto& it : cm.items) {
              const auto rel = "images/" + it.candidate.id + "." + it.image.format;
              store.write_file(m.run_id, rel, it.image.image_bytes);
              add_artifact(rel);
            }
            store.write_file(m.run_id, "crossmodal.csv", crossmodal_csv(cm));
            add_artifact("crossmodal.csv");
            auto& tr = m.stage_reports.back();
            tr.statistics.push_back({"crossmodal_items", static_cast<double>(cm.items.size())});
            tr.statistics.push_back({"mean_image_text_similarity", cm.mean_similarity});
            tr.statistics.push_back({"mean_caption_f1", cm.mean_caption_f1});
            if (!cm.skip_reason.empty()) m.notes.push_back("cross-modal partial: " + cm.skip_reason);
          }
        }
      }
    }
    for (const auto& f : report::emit_report(store, m.run_id, cfg)) add_artifact(f);
    m.status = options.stop_after && *options.stop_after != Stage::T ? store::RunStatus::partial
                                                                      : store::RunStatus::complete;
    if (m.status == store::RunStatus::partial) {
      m.notes.push_back("stopped after stage " + std::string(to_string(*options.stop_after)));
    }
  } catch (const Error& e) {
    m.status = store::RunStatus::failed;
    m.error = std::string(to_string(e.code())) + ": " + e.what();
  }
  store.write_manifest(m);
  return m;
}

}  // namespace earth::pipeline
