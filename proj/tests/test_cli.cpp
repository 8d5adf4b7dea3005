#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "earth/config.hpp"
#include "earth/csv.hpp"
#include "test_util.hpp"

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with stdout and stderr captured to files in `dir`.
Result earth_cli(const testutil::TempDir& dir, const std::string& args) {
  const auto out = dir.path() / "stdout.txt";
  const auto err = dir.path() / "stderr.txt";
  const std::string cmd = std::string("env -u EARTH_DATA_DIR -u EARTH_MOCK -u EARTH_RUN_SEED ") + EARTH_CLI_PATH +
                          " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

}  // namespace

TEST_CASE("cli: missing config exits 2 with a one-line JSON error") {
  testutil::TempDir dir;
  const auto r = earth_cli(dir, "run --config " + (dir.path() / "absent.json").string());
  CHECK(r.exit_code == 2);
  REQUIRE_FALSE(r.err.empty());
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j.contains("error"));
  CHECK(j.contains("message"));
}

TEST_CASE("cli: unknown flag exits 2") {
  testutil::TempDir dir;
  CHECK(earth_cli(dir, "run --bogus").exit_code == 2);
}

TEST_CASE("cli: mock run prints the manifest path, report rebuilds") {
  testutil::TempDir dir;
  const auto data = (dir.path() / "data").string();
  const auto r = earth_cli(dir, "run --mock --run-seed 5 --stage A --data-dir " + data);
  REQUIRE(r.exit_code == 0);
  auto path = r.out;
  while (!path.empty() && (path.back() == '\n' || path.back() == '\r')) path.pop_back();
  REQUIRE(std::filesystem::exists(path));
  std::ifstream in(path);
  const auto m = nlohmann::json::parse(in);
  CHECK(m["status"] == "partial");
  CHECK(m["run_seed"] == 5);
  CHECK(m["stage_reports"].size() == 2);

  const auto rep = earth_cli(dir, "report --data-dir " + data + " --run " + m["run_id"].get<std::string>());
  CHECK(rep.exit_code == 0);
  CHECK(rep.out.find("report/summary.json") != std::string::npos);

  const auto missing = earth_cli(dir, "report --data-dir " + data + " --run run-nope");
  CHECK(missing.exit_code == 2);
}

TEST_CASE("cli: the shipped mock config runs to completion") {
  testutil::TempDir dir;
  const auto r = earth_cli(dir, std::string("run --config ") + EARTH_CONFIG_DIR + "/mock.json --data-dir " +
                                    (dir.path() / "data").string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("manifest.json") != std::string::npos);
}

TEST_CASE("shipped http example config parses and validates") {
  const auto cfg = earth::load_run_config(EARTH_CONFIG_DIR "/http.example.json");
  CHECK_FALSE(cfg.backends.mock);
  REQUIRE(cfg.backends.text);
  CHECK(cfg.backends.text->api_key_env == "EARTH_TEXT_API_KEY");
  REQUIRE(cfg.backends.embedding);
  CHECK(cfg.backends.embedding->token_path);
  CHECK_FALSE(cfg.backends.embedding->pair_relevance_path);
  CHECK(cfg.pipeline.themes.size() == 5);
  CHECK_NOTHROW(cfg.pipeline.validate());
}

TEST_CASE("cli: score on a 2-row file gives 2 scored rows") {
  testutil::TempDir dir;
  const auto in = dir.path() / "pairs.csv";
  {
    std::ofstream f(in);
    f << "prompt,text\n"
      << "\"Write a slogan for \"\"Green Future\"\"\",Grow tomorrow today\n"
      << "Write a slogan for speed,\"Faster, brighter, bolder\"\n";
  }
  const auto out = dir.path() / "scored.csv";
  const auto r = earth_cli(dir, "score --in " + in.string() + " --out " + out.string());
  REQUIRE(r.exit_code == 0);
  std::ifstream f(out);
  std::stringstream ss;
  ss << f.rdbuf();
  const auto rows = earth::csv::parse(ss.str());
  REQUIRE(rows.size() == 3);
  const auto& header = rows[0];
  const auto col = std::find(header.begin(), header.end(), "novelty") - header.begin();
  REQUIRE(col < static_cast<long>(header.size()));
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK_FALSE(rows[i][col].empty());

  const auto bad = earth_cli(dir, "score --in " + in.string() + " --reference-column nope");
  CHECK(bad.exit_code == 2);
}
