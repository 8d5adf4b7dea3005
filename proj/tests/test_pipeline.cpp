#include <set>

#include "doctest.h"

#include "earth/error.hpp"
#include "earth/mock_backends.hpp"
#include "earth/pipeline.hpp"
#include "earth/replay_backends.hpp"
#include "earth/run_store.hpp"
#include "earth/text.hpp"
#include "test_util.hpp"

using namespace earth;
using namespace earth::pipeline;

namespace {

gateway::GatewayOptions opts(std::uint64_t seed) {
  gateway::GatewayOptions o;
  o.run_seed = seed;
  o.retry.initial_delay = std::chrono::milliseconds(1);
  return o;
}

Candidate scored(std::string id, std::string method, double n, double s, double d, double r, Stage st = Stage::E) {
  Candidate c;
  c.id = std::move(id);
  c.stage = st;
  c.method = std::move(method);
  c.theme = "Speed and Motion";
  c.prompt = theme_prompt(c.theme);
  c.text = "Fast wheels " + c.id;
  c.scores = scoring::ScoreBreakdown::compose(n, s, d, r, scoring::RelevanceMethod::greedy_token_f1);
  return c;
}

}  // namespace

TEST_CASE("clean_slogan strips wrappers") {
  CHECK(clean_slogan("Sure! Here's a slogan: \"Born to Glow\"") == "Born to Glow");
  CHECK(clean_slogan("“Ride the Light”") == "Ride the Light");
  CHECK(clean_slogan("Final slogan: Wings of Wonder\nExplanation: it evokes flight.") == "Wings of Wonder");
  CHECK(clean_slogan("\n\nTagline: Green Is Gold\n") == "Green Is Gold");
  CHECK(clean_slogan("Here is my heart, take it") == "Here is my heart, take it");
  CHECK(clean_slogan("   ") == "");
  CHECK(clean_slogan("\"\"") == "");
}

TEST_CASE("prompts carry their inputs") {
  CHECK(theme_prompt("Green Future").find("\"Green Future\"") != std::string::npos);
  CHECK(refine_prompt("Go far").find("Tagline: Go far") != std::string::npos);
  CHECK(image_prompt("Go far").find("Go far") != std::string::npos);
}

TEST_CASE("mock pipeline produces the default stage counts") {
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  PipelineConfig cfg;
  cfg.run_seed = 7;
  gateway::Gateway gw(gateway::make_mock_backends(7), opts(7));
  RunOptions ro;
  ro.clock = testutil::fixed_clock;
  const auto m = run_full_pipeline(cfg, gw, st, ro);
  CHECK(m.status == store::RunStatus::complete);
  REQUIRE(m.stage_reports.size() == 4);
  CHECK(m.stage_reports[0].output_count == 50);
  CHECK(m.stage_reports[1].output_count == 75);
  CHECK(m.stage_reports[2].output_count == 20);
  CHECK(m.stage_reports[3].output_count == 20);

  const auto all = st.load_candidates(m.run_id);
  Lineage lin;
  lin.add(all);
  std::set<std::string> ids;
  for (const auto& c : all) {
    CHECK(ids.insert(c.id).second);
    REQUIRE(c.scores);
    if (c.stage == Stage::E) {
      CHECK_FALSE(c.parent_id);
    } else {
      REQUIRE(c.parent_id);
      CHECK(lin.find(*c.parent_id) != nullptr);
      // Every chain ends at an error-induced seed.
      CHECK(lin.root(c).method == cfg.seed_method);
    }
  }
  CHECK(st.has_file(m.run_id, "report/summary.json"));
}

TEST_CASE("two runs with the same seed write byte-identical candidate tables") {
  testutil::TempDir d1, d2;
  store::RunStore s1(d1.path()), s2(d2.path());
  PipelineConfig cfg;
  cfg.run_seed = 11;
  RunOptions ro;
  ro.clock = testutil::fixed_clock;
  gateway::Gateway g1(gateway::make_mock_backends(11), opts(11));
  gateway::Gateway g2(gateway::make_mock_backends(11), opts(11));
  const auto m1 = run_full_pipeline(cfg, g1, s1, ro);
  const auto m2 = run_full_pipeline(cfg, g2, s2, ro);
  for (const char* f : {"candidates_E.csv", "candidates_A.csv", "candidates_R.csv", "candidates_T.csv",
                        "report/length_deltas.csv", "report/stage_means.csv"}) {
    const auto a = s1.read_file(m1.run_id, f), b = s2.read_file(m2.run_id, f);
    REQUIRE(a);
    REQUIRE(b);
    CHECK_MESSAGE(*a == *b, f);
  }
}

TEST_CASE("stop_after leaves a partial run") {
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  PipelineConfig cfg;
  cfg.themes = {"Green Future"};
  gateway::Gateway gw(gateway::make_mock_backends(1), opts(1));
  RunOptions ro;
  ro.stop_after = Stage::A;
  cfg.seeds_k = 3;
  const auto m = run_full_pipeline(cfg, gw, st, ro);
  CHECK(m.status == store::RunStatus::partial);
  CHECK(m.stage_reports.size() == 2);
  CHECK(st.load_candidates(m.run_id, {Stage::R}).empty());
}

TEST_CASE("seed selection filters by method and breaks ties by id") {
  gateway::Gateway gw(gateway::make_mock_backends(1), opts(1));
  PipelineConfig cfg;
  cfg.seeds_k = 2;
  Engine eng(cfg, gw, testutil::fixed_clock);
  std::vector<Candidate> e{scored("E-0003", "err", 1, 1, 1, 1), scored("E-0001", "err", 1, 1, 1, 1),
                           scored("E-0002", "std", 9, 9, 9, 9), scored("E-0004", "err", 0, 0, 0, 0)};
  const auto seeds = eng.select_seeds(e);
  REQUIRE(seeds.size() == 2);
  CHECK(seeds[0].id == "E-0001");
  CHECK(seeds[1].id == "E-0003");
  cfg.seeds_k = 4;
  Engine eng4(cfg, gw, testutil::fixed_clock);
  CHECK_THROWS_AS(eng4.select_seeds(e), Error);
}

TEST_CASE("single theme, single seed, single variant") {
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  PipelineConfig cfg;
  cfg.themes = {"Green Future"};
  cfg.seeds_k = 1;
  cfg.variants_per_seed = 1;
  cfg.refine_top_k = 1;
  cfg.refine_candidates = 1;
  gateway::Gateway gw(gateway::make_mock_backends(2), opts(2));
  const auto m = run_full_pipeline(cfg, gw, st);
  CHECK(m.status == store::RunStatus::complete);
  CHECK(m.stage_reports[1].output_count == 1);
  CHECK(m.stage_reports[2].output_count == 1);
  CHECK(m.stage_reports[3].output_count == 1);
}

TEST_CASE("R stage keeps the top r_score variants") {
  gateway::Gateway gw(gateway::make_mock_backends(1), opts(1));
  PipelineConfig cfg;
  cfg.refine_top_k = 2;
  Engine eng(cfg, gw, testutil::fixed_clock);
  auto seed = scored("E-0001", "err", 0.5, 1, 0.2, 0.5);
  std::vector<Candidate> vars{scored("A-0001", "amplify", 0.1, 1, 0, 0.1, Stage::A),
                              scored("A-0002", "amplify", 0.9, 3, 0, 0.9, Stage::A),
                              scored("A-0003", "amplify", 0.5, 2, 0, 0.5, Stage::A)};
  for (auto& v : vars) v.parent_id = seed.id;
  Lineage lin;
  lin.add({seed});
  lin.add(vars);
  const auto r = eng.run_stage_r(vars, lin);
  REQUIRE(r.selected.size() == 2);
  CHECK(r.selected[0].parent_id == "A-0002");
  CHECK(r.selected[1].parent_id == "A-0003");
  CHECK(r.selected[0].stage == Stage::R);
  CHECK(r.scatter.size() == 3);
  CHECK(r.length_delta.deltas.size() == 3);
}

TEST_CASE("T stage picks the rewrite with the highest t_score") {
  gateway::Gateway gw(gateway::make_mock_backends(4), opts(4));
  PipelineConfig cfg;
  Engine eng(cfg, gw, testutil::fixed_clock);
  auto seed = scored("E-0001", "err", 0.5, 1, 0.2, 0.5);
  seed.text = "Speed carves the wind";
  auto rin = scored("R-0001", "amplify", 0.4, 1, 0.2, 0.4, Stage::R);
  rin.text = "Speed carves the wind into silver ribbons of tomorrow";
  rin.parent_id = seed.id;
  Lineage lin;
  lin.add({seed, rin});
  const auto t = eng.run_stage_t({rin}, lin);
  REQUIRE(t.finals.size() == 1);
  const auto& f = t.finals[0];
  CHECK(f.stage == Stage::T);
  CHECK(f.parent_id == "R-0001");
  REQUIRE(f.scores);
  // Recompute every rewrite's t_score and confirm nothing beats the pick.
  const auto rewrites = gw.generate(std::string(kCopywriterSystemPrompt), refine_prompt(rin.text),
                                    [&] {
                                      auto p = cfg.profile(cfg.refine_profile);
                                      p.variants = cfg.refine_candidates;
                                      return p;
                                    }());
  for (const auto& g : rewrites) {
    const auto txt = clean_slogan(g.text);
    if (txt.empty()) continue;
    const auto s = eng.score(txt, seed.text, scoring::surprise(g.token_logprobs));
    CHECK(s.t_score <= f.scores->t_score + 1e-12);
  }
}

TEST_CASE("compression stats pair by parent") {
  auto b1 = scored("R-0001", "amplify", 1.0, 0, 0, 0.5, Stage::R);
  b1.text = "0123456789";
  auto a1 = scored("T-0001", "refine", 0.5, 0, 0, 0.6, Stage::T);
  a1.text = "01234";
  a1.parent_id = "R-0001";
  const auto c = compression_stats({b1}, {a1});
  CHECK(c.mean_length_before == 10.0);
  CHECK(c.mean_length_after == 5.0);
  CHECK(c.length_change_pct == doctest::Approx(-50.0));
  CHECK(c.novelty_change_pct == doctest::Approx(-50.0));
  CHECK(c.relevance_change_pct == doctest::Approx(20.0));
}

TEST_CASE("stage comparison groups and tests") {
  std::vector<Candidate> all{scored("E-0001", "std", 0.1, 1, 0, 0.5), scored("E-0002", "std", 0.2, 1, 0, 0.5),
                             scored("E-0003", "err", 0.5, 2, 0, 0.5), scored("E-0004", "err", 0.6, 3, 0, 0.5)};
  const auto cmp = stage_comparison(all);
  REQUIRE(cmp.groups.size() == 4);
  CHECK(cmp.groups[0].name == "Std");
  CHECK(cmp.groups[0].n == 2);
  CHECK(cmp.groups[2].n == 0);
  bool saw_std_err = false;
  for (const auto& t : cmp.tests) {
    if (t.from == "Std" && t.to == "Err") {
      saw_std_err = true;
      REQUIRE(t.result);
    } else {
      CHECK_FALSE(t.result);
      CHECK_FALSE(t.omitted_reason.empty());
    }
  }
  CHECK(saw_std_err);
}

TEST_CASE("cross-modal stage") {
  SUBCASE("disabled") {
    gateway::Gateway gw(gateway::make_mock_backends(1), opts(1));
    PipelineConfig cfg;
    cfg.crossmodal_enabled = false;
    Engine eng(cfg, gw);
    const auto out = eng.run_stage_t_crossmodal({scored("T-0001", "refine", 0, 0, 0, 0, Stage::T)});
    CHECK(out.skipped);
    CHECK(out.items.empty());
  }
  SUBCASE("backends absent") {
    gateway::Gateway gw(gateway::make_mock_backends(1, true, false), opts(1));
    Engine eng(PipelineConfig{}, gw);
    const auto out = eng.run_stage_t_crossmodal({scored("T-0001", "refine", 0, 0, 0, 0, Stage::T)});
    CHECK(out.skipped);
    CHECK_FALSE(out.skip_reason.empty());
  }
  SUBCASE("replayed fixture reproduces the recorded means") {
    const auto rows = gateway::load_crossmodal_fixture(EARTH_FIXTURE_DIR "/crossmodal_replay.json");
    auto backends = gateway::make_mock_backends(1);
    gateway::install_crossmodal_replay(backends, std::make_shared<const gateway::CrossmodalReplay>(rows));
    gateway::Gateway gw(backends, opts(1));
    Engine eng(PipelineConfig{}, gw);
    std::vector<Candidate> finals;
    for (const auto& r : rows) {
      auto c = scored(r.id, "refine", 0, 0, 0, 0, Stage::T);
      c.text = r.slogan;
      finals.push_back(c);
    }
    const auto out = eng.run_stage_t_crossmodal(finals);
    REQUIRE_FALSE(out.skipped);
    CHECK(out.items.size() == 5);
    CHECK(std::abs(out.mean_similarity - 0.249) < 1e-3);
    CHECK(std::abs(out.mean_caption_f1 - 0.816) < 1e-3);
    for (const auto& it : out.items) CHECK(it.caption_method == scoring::RelevanceMethod::backend_pair_score);
  }
}

TEST_CASE("parallel_map keeps index order") {
  const std::function<int(std::size_t)> sq = [](std::size_t i) { return static_cast<int>(i * i); };
  const auto out = parallel_map<int>(100, 4, sq);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
}
