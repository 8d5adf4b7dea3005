#include <cstring>
#include <random>

#include "doctest.h"

#include "earth/error.hpp"
#include "earth/run_store.hpp"
#include "test_util.hpp"

using namespace earth;
using namespace earth::store;

namespace {

Candidate synth(std::mt19937_64& rng, Stage st, std::size_t i) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Candidate c;
  char id[16];
  std::snprintf(id, sizeof(id), "%s-%05zu", std::string(to_string(st)).c_str(), i);
  c.id = id;
  c.stage = st;
  c.method = i % 2 ? "std" : "err";
  c.theme = "Green Future";
  c.prompt = "Write a slogan, \"quoted\"\nwith a newline";
  if (st != Stage::E) c.parent_id = "E-00001";
  c.text = "Grow, \"green\" " + std::to_string(i);
  c.scores = scoring::ScoreBreakdown::compose(u(rng) / 3.0, u(rng) * 7.0, u(rng) / 7.0, u(rng) / 9.0,
                                              scoring::RelevanceMethod::greedy_token_f1);
  c.created_at = "2026-01-01T00:00:00.000Z";
  return c;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("empty run loads no candidates") {
  testutil::TempDir dir;
  RunStore st(dir.path());
  const auto id = st.create_run({{"k", 1}});
  CHECK(st.has_run(id));
  CHECK(st.load_candidates(id).empty());
  CHECK(st.load_config(id)["k"] == 1);
  CHECK_FALSE(st.has_run("../etc"));
  CHECK_THROWS_AS(st.run_dir("nope"), Error);
}

TEST_CASE("append and load round-trip, id order, filters") {
  testutil::TempDir dir;
  RunStore st(dir.path());
  const auto id = st.create_run(nlohmann::json::object());
  std::mt19937_64 rng(1);
  std::vector<Candidate> rows;
  for (std::size_t i = 75; i >= 1; --i) rows.push_back(synth(rng, Stage::A, i));
  CHECK(st.append_candidates(id, Stage::A, rows) == 75);
  const auto loaded = st.load_candidates(id);
  REQUIRE(loaded.size() == 75);
  for (std::size_t i = 1; i < loaded.size(); ++i) CHECK(loaded[i - 1].id < loaded[i].id);
  std::map<std::string, Candidate> by_id;
  for (const auto& c : rows) by_id[c.id] = c;
  for (const auto& c : loaded) CHECK(c == by_id.at(c.id));

  CandidateFilter f;
  f.method = "std";
  CHECK(st.load_candidates(id, f).size() == 38);
  f = {};
  f.after_id = "A-00070";
  f.limit = 3;
  const auto page = st.load_candidates(id, f);
  REQUIRE(page.size() == 3);
  CHECK(page[0].id == "A-00071");
  f = {};
  f.stage = Stage::T;
  CHECK(st.load_candidates(id, f).empty());
}

TEST_CASE("duplicate ids and stage mismatches are rejected atomically") {
  testutil::TempDir dir;
  RunStore st(dir.path());
  const auto id = st.create_run(nlohmann::json::object());
  std::mt19937_64 rng(2);
  std::vector<Candidate> first{synth(rng, Stage::E, 1), synth(rng, Stage::E, 2)};
  st.append_candidates(id, Stage::E, first);
  std::vector<Candidate> dup{synth(rng, Stage::E, 3), synth(rng, Stage::E, 2)};
  try {
    st.append_candidates(id, Stage::E, dup);
    FAIL("expected conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }
  CHECK(st.load_candidates(id).size() == 2);
  std::vector<Candidate> wrong{synth(rng, Stage::A, 4)};
  CHECK_THROWS_AS(st.append_candidates(id, Stage::E, wrong), Error);
}

TEST_CASE("csv form is bit-exact for doubles") {
  std::mt19937_64 rng(3);
  std::vector<Candidate> rows;
  for (std::size_t i = 1; i <= 200; ++i) rows.push_back(synth(rng, Stage::R, i));
  const auto back = candidates_from_csv(candidates_to_csv(rows));
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(back[i].scores);
    CHECK(bit_equal(back[i].scores->novelty, rows[i].scores->novelty));
    CHECK(bit_equal(back[i].scores->surprise, rows[i].scores->surprise));
    CHECK(bit_equal(back[i].scores->r_score, rows[i].scores->r_score));
    CHECK(back[i].prompt == rows[i].prompt);
  }
  CHECK_THROWS_AS(candidates_from_csv("wrong,header\n"), Error);
}

TEST_CASE("manifest round-trip") {
  testutil::TempDir dir;
  RunStore st(dir.path());
  RunManifest m;
  m.run_id = st.create_run(nlohmann::json::object());
  m.created_at = "2026-01-01T00:00:00.000Z";
  m.backends = {{"text", "mock-text"}};
  m.run_seed = 9;
  m.status = RunStatus::failed;
  m.error = "empty_generation: nothing";
  StageReport r;
  r.stage = Stage::E;
  r.input_count = 50;
  r.output_count = 49;
  r.statistics = {{"skipped", 1}};
  m.stage_reports = {r};
  st.write_manifest(m);
  const auto back = st.load_manifest(m.run_id);
  REQUIRE(back);
  CHECK(to_json(*back) == to_json(m));
  CHECK(st.list_runs() == std::vector<std::string>{m.run_id});
}

TEST_CASE("relative file paths cannot escape the run") {
  testutil::TempDir dir;
  RunStore st(dir.path());
  const auto id = st.create_run(nlohmann::json::object());
  st.write_file(id, "images/x.png", "bytes");
  CHECK(st.read_file(id, "images/x.png") == std::optional<std::string>("bytes"));
  CHECK_THROWS_AS(st.write_file(id, "../evil", "x"), Error);
  CHECK_FALSE(st.read_file(id, "missing.txt"));
}
