// One PASS/FAIL line per primary acceptance criterion. Exit status is the
// number of failures, so ctest fails when any criterion does.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "earth/error.hpp"
#include "earth/feedback.hpp"
#include "earth/mock_backends.hpp"
#include "earth/pipeline.hpp"
#include "earth/replay_backends.hpp"
#include "earth/run_store.hpp"
#include "earth/scoring.hpp"
#include "earth/service.hpp"
#include "earth/stats.hpp"
#include "../oracles.hpp"
#include "../test_util.hpp"

using namespace earth;
using nlohmann::json;

namespace {

// Tolerances and budgets, fixed here rather than passed in.
constexpr double kJsdOracleTol = 1e-9;
constexpr double kJsdHandTol = 1e-4;
constexpr double kJsdBudgetSeconds = 5.0;
constexpr double kNoveltyTol = 1e-6;
constexpr double kF1Tol = 1e-9;
constexpr double kCompositeTol = 1e-12;
constexpr double kWelchTTol = 1e-3;
constexpr double kPTol = 1e-6;
constexpr double kPipelineBudgetSeconds = 30.0;
constexpr double kReplayTol = 1e-3;

constexpr int kJsdPairs = 1000;
constexpr int kNoveltyVectors = 1000;
constexpr int kF1Cases = 500;
constexpr std::size_t kF1MaxTokens = 8;
constexpr std::size_t kCsvRows = 10000;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %7.3fs  %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

gateway::GatewayOptions mock_opts(std::uint64_t seed) {
  gateway::GatewayOptions o;
  o.run_seed = seed;
  o.retry.initial_delay = std::chrono::milliseconds(1);
  return o;
}

Outcome metric_jsd() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20261014);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  std::uniform_int_distribution<int> support(1, 12);
  std::uniform_int_distribution<int> vocab(0, 15);
  double worst = 0.0;
  for (int i = 0; i < kJsdPairs; ++i) {
    auto draw = [&] {
      std::map<std::string, double> m;
      const int n = support(rng);
      for (int k = 0; k < n; ++k) m["t" + std::to_string(vocab(rng))] += u(rng);
      double s = 0.0;
      for (const auto& [k, v] : m) s += v;
      for (auto& [k, v] : m) v /= s;
      return m;
    };
    const auto p = draw(), q = draw();
    const double got = scoring::js_divergence(scoring::TokenDistribution(p), scoring::TokenDistribution(q));
    worst = std::max(worst, std::abs(got - oracle::jsd(p, q)));
  }
  o.require(worst <= kJsdOracleTol, fmt("max oracle deviation %.3g", worst));

  const scoring::TokenDistribution ab({{"a", 0.5}, {"b", 0.5}}), a1({{"a", 1.0}}), b1({{"b", 1.0}});
  const double h0 = scoring::js_divergence(ab, ab);
  const double h1 = scoring::js_divergence(a1, b1);
  const double h2 = scoring::js_divergence(ab, a1);
  o.require(std::abs(h0 - 0.0) <= kJsdHandTol, fmt("identical pair gave %.6f", h0));
  o.require(std::abs(h1 - 1.0) <= kJsdHandTol, fmt("disjoint pair gave %.6f", h1));
  o.require(std::abs(h2 - 0.31128) <= kJsdHandTol, fmt("half-overlap pair gave %.6f", h2));
  const double secs = seconds_since(t0);
  o.require(secs < kJsdBudgetSeconds, fmt("took %.2fs", secs));
  if (o.pass) o.detail = fmt("%.0f pairs, max deviation %.2g", kJsdPairs, worst);
  return o;
}

Outcome metric_novelty() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(1, 32);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  double worst_sym = 0.0, worst_self = 0.0, worst_opp = 0.0;
  for (int i = 0; i < kNoveltyVectors; ++i) {
    const int d = dim(rng);
    std::vector<double> a(d), b(d), neg(d);
    const double s = scale(rng);
    for (int k = 0; k < d; ++k) {
      a[k] = g(rng);
      b[k] = g(rng);
      neg[k] = -s * a[k];
    }
    const scoring::EmbeddingVector va(a), vb(b), vn(neg);
    worst_sym = std::max(worst_sym, std::abs(scoring::novelty(va, vb) - scoring::novelty(vb, va)));
    worst_self = std::max(worst_self, std::abs(scoring::novelty(va, va)));
    worst_opp = std::max(worst_opp, std::abs(scoring::novelty(va, vn) - 2.0));
  }
  o.require(worst_sym <= kNoveltyTol, fmt("symmetry deviation %.3g", worst_sym));
  o.require(worst_self <= kNoveltyTol, fmt("self-distance %.3g", worst_self));
  o.require(worst_opp <= kNoveltyTol, fmt("opposite-vector deviation %.3g", worst_opp));

  using V = scoring::EmbeddingVector;
  o.require(std::abs(scoring::novelty(V({1, 0}), V({1, 0}))) <= kNoveltyTol, "identical hand case");
  o.require(std::abs(scoring::novelty(V({1, 0}), V({0, 1})) - 1.0) <= kNoveltyTol, "orthogonal hand case");
  o.require(std::abs(scoring::novelty(V({1, 0}), V({-1, 0})) - 2.0) <= kNoveltyTol, "opposite hand case");
  o.require(std::abs(scoring::cosine_similarity(V({1, 1}), V({1, 0})) - 0.70711) <= 1e-5, "45-degree cosine");
  if (o.pass) o.detail = fmt("%.0f vectors, max deviation %.2g", kNoveltyVectors, std::max({worst_sym, worst_self, worst_opp}));
  return o;
}

Outcome metric_greedy_f1() {
  Outcome o;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<std::size_t> size(1, kF1MaxTokens);
  std::uniform_int_distribution<int> dim(2, 6);
  double worst = 0.0;
  for (int i = 0; i < kF1Cases; ++i) {
    const int d = dim(rng);
    auto draw = [&](std::size_t n) {
      std::vector<std::vector<double>> vs(n, std::vector<double>(d));
      for (auto& v : vs) {
        for (auto& x : v) x = g(rng);
      }
      return vs;
    };
    const auto cv = draw(size(rng)), rv = draw(size(rng));
    std::vector<scoring::TokenEmbedding> c, r;
    for (std::size_t k = 0; k < cv.size(); ++k) c.push_back({"c" + std::to_string(k), scoring::EmbeddingVector(cv[k])});
    for (std::size_t k = 0; k < rv.size(); ++k) r.push_back({"r" + std::to_string(k), scoring::EmbeddingVector(rv[k])});
    const auto got = scoring::greedy_match(c, r);
    const auto want = oracle::greedy_f1(cv, rv);
    worst = std::max({worst, std::abs(got.f1 - want.f1), std::abs(got.precision - want.p), std::abs(got.recall - want.r)});
  }
  o.require(worst <= kF1Tol, fmt("max oracle deviation %.3g", worst));
  if (o.pass) o.detail = fmt("%.0f cases, max deviation %.2g", kF1Cases, worst);
  return o;
}

Outcome composites() {
  Outcome o;
  const double a = scoring::creativity_score_a(0.3, 4.0, 0.5, 0.9);
  const double r = scoring::r_score(0.3, 4.0, 0.9);
  const double t = scoring::t_score(0.67, 0.89);
  o.require(std::abs(a - 2.73) <= kCompositeTol, fmt("CreativityScore gave %.17g", a));
  o.require(std::abs(r - 1.90) <= kCompositeTol, fmt("R gave %.17g", r));
  o.require(std::abs(t - 0.736) <= kCompositeTol, fmt("T gave %.17g", t));

  // Scaling a component that is equal across candidates must not move the argmax.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  int flips = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::array<double, 3>> c(8);
    for (auto& x : c) x = {u(rng), u(rng) * 4, u(rng)};
    const double shared = u(rng);
    auto argmax = [&](const std::function<double(const std::array<double, 3>&, double)>& f, double scale) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < c.size(); ++i) {
        if (f(c[i], shared * scale) > f(c[best], shared * scale)) best = i;
      }
      return best;
    };
    const std::function<double(const std::array<double, 3>&, double)> by_relevance =
        [](const std::array<double, 3>& x, double s) { return scoring::r_score(x[0], x[1], s); };
    const std::function<double(const std::array<double, 3>&, double)> by_divergence =
        [](const std::array<double, 3>& x, double s) { return scoring::creativity_score_a(x[0], x[1], s, x[2]); };
    const std::function<double(const std::array<double, 3>&, double)> t_by_relevance =
        [](const std::array<double, 3>& x, double s) { return scoring::t_score(x[0], s); };
    for (double scale : {0.25, 2.0, 10.0}) {
      flips += argmax(by_relevance, 1.0) != argmax(by_relevance, scale);
      flips += argmax(by_divergence, 1.0) != argmax(by_divergence, scale);
      flips += argmax(t_by_relevance, 1.0) != argmax(t_by_relevance, scale);
    }
  }
  o.require(flips == 0, fmt("argmax moved in %.0f trials", flips));
  if (o.pass) o.detail = "2.73 / 1.90 / 0.736 exact; argmax stable over 1800 scalings";
  return o;
}

Outcome statistics() {
  Outcome o;
  const std::vector<double> a{1, 2, 3}, b{1, 2, 4};
  const auto p = stats::paired_t_test(a, b);
  o.require(std::abs(p.t_statistic - 1.0) <= kCompositeTol, fmt("paired t %.17g", p.t_statistic));
  o.require(p.degrees_of_freedom == 2.0, fmt("paired df %.17g", p.degrees_of_freedom));
  const std::vector<double> x{1, 2, 3}, y{2, 3, 4};
  const auto w = stats::welch_t_test(x, y);
  o.require(std::abs(w.t_statistic - -1.2247) <= kWelchTTol, fmt("Welch t %.6f", w.t_statistic));
  o.require(std::abs(w.degrees_of_freedom - 4.0) <= 1e-12, fmt("Welch df %.6f", w.degrees_of_freedom));

  double worst = std::max(std::abs(p.p_value - oracle::two_sided_p(p.t_statistic, p.degrees_of_freedom)),
                          std::abs(w.p_value - oracle::two_sided_p(w.t_statistic, w.degrees_of_freedom)));
  for (double df : {1.0, 2.0, 3.0, 4.0, 7.5, 19.0, 38.0, 120.0}) {
    for (double t : {0.05, 0.5, 1.0, 1.96, 2.5, 3.3, 5.56, 9.0}) {
      worst = std::max(worst, std::abs(stats::two_sided_p(t, df) - oracle::two_sided_p(t, df)));
    }
  }
  o.require(worst <= kPTol, fmt("max p deviation %.3g", worst));
  if (o.pass) o.detail = fmt("paired t=1 df=2; Welch t=%.4f df=4; max p deviation %.2g", w.t_statistic, worst);
  return o;
}

Outcome pipeline_counts() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  testutil::TempDir d1, d2;
  store::RunStore s1(d1.path()), s2(d2.path());
  PipelineConfig cfg;
  cfg.run_seed = 42;
  pipeline::RunOptions ro;
  ro.clock = testutil::fixed_clock;
  gateway::Gateway g1(gateway::make_mock_backends(42), mock_opts(42));
  gateway::Gateway g2(gateway::make_mock_backends(42), mock_opts(42));
  const auto m1 = pipeline::run_full_pipeline(cfg, g1, s1, ro);
  const auto m2 = pipeline::run_full_pipeline(cfg, g2, s2, ro);
  o.require(m1.status == store::RunStatus::complete, "run status " + std::string(store::to_string(m1.status)) + " " + m1.error);
  std::vector<std::size_t> counts;
  for (const auto& r : m1.stage_reports) counts.push_back(r.output_count);
  const std::vector<std::size_t> want{50, 75, 20, 20};
  std::string got;
  for (auto c : counts) got += std::to_string(c) + " ";
  o.require(counts == want, "stage counts " + got);
  for (const char* f : {"candidates_E.csv", "candidates_A.csv", "candidates_R.csv", "candidates_T.csv"}) {
    const auto a = s1.read_file(m1.run_id, f), b = s2.read_file(m2.run_id, f);
    o.require(a && b && *a == *b, std::string(f) + " differs between runs");
  }
  const double secs = seconds_since(t0);
  o.require(secs < kPipelineBudgetSeconds, fmt("two runs took %.2fs", secs));
  if (o.pass) o.detail = "(50, 75, 20, 20), CSVs byte-identical across two runs";
  return o;
}

Outcome reproduction() {
  Outcome o;
  // (b) replaying the recorded cross-modal evaluation.
  const auto rows = gateway::load_crossmodal_fixture(EARTH_FIXTURE_DIR "/crossmodal_replay.json");
  auto backends = gateway::make_mock_backends(1);
  gateway::install_crossmodal_replay(backends, std::make_shared<const gateway::CrossmodalReplay>(rows));
  gateway::Gateway gw(backends, mock_opts(1));
  pipeline::Engine eng(PipelineConfig{}, gw);
  std::vector<Candidate> finals;
  for (const auto& r : rows) {
    Candidate c;
    c.id = r.id;
    c.stage = Stage::T;
    c.text = r.slogan;
    finals.push_back(c);
  }
  const auto cm = eng.run_stage_t_crossmodal(finals);
  o.require(!cm.skipped, "replay skipped: " + cm.skip_reason);
  o.require(cm.items.size() == rows.size(), "replay lost items");
  o.require(std::abs(cm.mean_similarity - 0.249) <= kReplayTol, fmt("mean similarity %.4f", cm.mean_similarity));
  o.require(std::abs(cm.mean_caption_f1 - 0.816) <= kReplayTol, fmt("mean caption F1 %.4f", cm.mean_caption_f1));

  // (a) a run emits the same statistics a real-backend run reports: group
  // means, the four Welch tests, the T-stage deltas and cross-modal means.
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  PipelineConfig cfg;
  cfg.run_seed = 9;
  gateway::Gateway mg(gateway::make_mock_backends(9), mock_opts(9));
  const auto m = pipeline::run_full_pipeline(cfg, mg, st);
  const auto data = st.read_file(m.run_id, "report/summary.json");
  o.require(data.has_value(), "no summary.json");
  if (data) {
    const auto s = json::parse(*data);
    std::vector<std::string> groups;
    for (const auto& g : s["stage_comparison"]["groups"]) groups.push_back(g["name"].get<std::string>());
    o.require(groups == std::vector<std::string>{"Std", "Err", "R", "T"}, "stage groups missing");
    std::size_t tests = 0;
    for (const auto& t : s["stage_comparison"]["tests"]) tests += t["result"].is_object();
    o.require(tests == 4, fmt("%.0f of 4 Welch tests computed", static_cast<double>(tests)));
    for (const char* k : {"length_change_pct", "novelty_change_pct", "relevance_change_pct"}) {
      o.require(s["compression"].contains(k), std::string("missing ") + k);
    }
    o.require(s.contains("crossmodal") && s["crossmodal"].contains("mean_similarity") &&
                  s["crossmodal"].contains("mean_caption_f1"),
              "missing cross-modal means");
    o.require(s.contains("length_delta") && s["length_delta"].contains("mean_delta"), "missing length deltas");
  }
  if (o.pass) {
    o.detail = fmt("replay similarity %.4f, caption F1 %.4f; run emits all statistics", cm.mean_similarity,
                   cm.mean_caption_f1);
  }
  return o;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Outcome csv_round_trip() {
  Outcome o;
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  const auto run = st.create_run(json::object());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Candidate> rows;
  for (std::size_t i = 1; i <= kCsvRows; ++i) {
    Candidate c;
    char id[16];
    std::snprintf(id, sizeof(id), "A-%05zu", i);
    c.id = id;
    c.stage = Stage::A;
    c.method = "amplify";
    c.theme = "Creative Expression";
    c.prompt = "Seed, with \"quotes\"\nand a newline";
    c.parent_id = "E-0001";
    c.text = "Paint the silence, " + std::to_string(i);
    // Values that need all 17 significant digits.
    c.scores = scoring::ScoreBreakdown::compose(u(rng) / 3.0, u(rng) * 7.0 + 1e-13, u(rng) / 7.0, u(rng) / 9.0,
                                                scoring::RelevanceMethod::greedy_token_f1);
    c.created_at = "2026-01-01T00:00:00.000Z";
    rows.push_back(c);
  }
  st.append_candidates(run, Stage::A, rows);
  const auto back = st.load_candidates(run);
  o.require(back.size() == rows.size(), fmt("loaded %.0f rows", static_cast<double>(back.size())));
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < std::min(back.size(), rows.size()); ++i) {
    const auto& x = rows[i];
    const auto& y = back[i];
    bool same = x.id == y.id && x.text == y.text && x.prompt == y.prompt && x.parent_id == y.parent_id && y.scores;
    if (same) {
      const auto& a = *x.scores;
      const auto& b = *y.scores;
      same = bit_equal(a.novelty, b.novelty) && bit_equal(a.surprise, b.surprise) &&
             bit_equal(a.divergence, b.divergence) && bit_equal(a.relevance, b.relevance) &&
             bit_equal(a.creativity_a, b.creativity_a) && bit_equal(a.r_score, b.r_score) &&
             bit_equal(a.t_score, b.t_score);
    }
    mismatches += !same;
  }
  o.require(mismatches == 0, fmt("%.0f rows differ", static_cast<double>(mismatches)));
  if (o.pass) o.detail = "10000 rows, every double bit-identical";
  return o;
}

Outcome service_contract() {
  Outcome o;
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  PipelineConfig cfg;
  cfg.themes = {"Green Future", "Speed and Motion"};
  cfg.seeds_k = 4;
  cfg.refine_top_k = 6;
  gateway::Gateway gw(gateway::make_mock_backends(2), mock_opts(2));
  const auto run = pipeline::run_full_pipeline(cfg, gw, st).run_id;
  feedback::FeedbackHub hub(st);
  service::Service svc(st, hub);
  const int port = svc.bind("127.0.0.1", 0);
  o.require(port > 0, "could not bind");
  if (port <= 0) return o;
  std::thread th([&] { svc.run(); });
  while (!svc.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  httplib::Client c("127.0.0.1", port);

  auto status = [](const httplib::Result& r) { return r ? r->status : -1; };
  o.require(status(c.Get("/runs/run-missing")) == 404, "unknown run not 404");
  o.require(status(c.Get("/batches/run-missing-b0001")) == 404, "unknown batch not 404");
  auto created = c.Post("/batches", json{{"run_id", run}}.dump(), "application/json");
  o.require(status(created) == 201, "batch creation failed");
  if (status(created) == 201) {
    const auto batch = json::parse(created->body);
    const auto id = batch["batch_id"].get<std::string>();
    const auto cand = batch["candidate_ids"][0].get<std::string>();
    json r{{"rater_id", "ann"},        {"candidate_id", cand}, {"creativity", 4},
           {"expressiveness", 4},      {"emotional_resonance", 5}, {"overall_impact", 4}};
    json zero = r;
    zero["overall_impact"] = 0;
    o.require(status(c.Post("/batches/" + id + "/ratings", zero.dump(), "application/json")) == 422,
              "out-of-range score not 422");
    std::vector<json> acks;
    for (int i = 0; i < 3; ++i) {
      auto res = c.Post("/batches/" + id + "/ratings", r.dump(), "application/json");
      o.require(status(res) == 200, "rating rejected");
      if (status(res) == 200) acks.push_back(json::parse(res->body));
    }
    if (acks.size() == 3) {
      o.require(acks[0]["replaced"] == false && acks[1]["replaced"] == true && acks[2]["replaced"] == true,
                "replacement flags wrong");
      o.require(acks[2]["ratings_in_batch"] == 1, "replacement duplicated the rating");
    }
    auto listed = c.Get("/batches/" + id + "/ratings");
    o.require(status(listed) == 200 && json::parse(listed->body).size() == 1, "stored ratings not deduplicated");
    o.require(status(c.Post("/batches/" + id + "/close", "", "application/json")) == 200, "close failed");
    o.require(status(c.Post("/batches/" + id + "/ratings", r.dump(), "application/json")) == 409,
              "closed batch not 409");
  }
  svc.stop();
  th.join();
  if (o.pass) o.detail = "404 / 422 / 409 and replacement idempotency, no UI involved";
  return o;
}

}  // namespace

int main() {
  report("metric-oracle-jsd", metric_jsd);
  report("novelty-cosine", metric_novelty);
  report("greedy-f1", metric_greedy_f1);
  report("composite-formulas", composites);
  report("statistics", statistics);
  report("pipeline-determinism-counts", pipeline_counts);
  report("reproduction-statement", reproduction);
  report("csv-round-trip", csv_round_trip);
  report("service-contract", service_contract);
  std::printf("%d failed\n", failures);
  return failures;
}
