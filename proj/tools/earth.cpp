// earth: run pipelines, score CSV files, rebuild reports, serve the API.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// Failures print one JSON object on stderr: {"error": <code>, "message": <text>}.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "earth/config.hpp"
#include "earth/csv.hpp"
#include "earth/error.hpp"
#include "earth/feedback.hpp"
#include "earth/mock_backends.hpp"
#include "earth/pipeline.hpp"
#include "earth/report.hpp"
#include "earth/run_store.hpp"
#include "earth/service.hpp"
#include "earth/text.hpp"

namespace {

using earth::Error;
using earth::ErrorCode;
using nlohmann::json;

int fail(std::string_view code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << "\n";
  return exit_code;
}

int exit_code_for(ErrorCode c) {
  return c == ErrorCode::config || c == ErrorCode::not_found || c == ErrorCode::invalid_argument ? 2 : 1;
}

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

std::uint64_t parse_seed(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos, 10);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, std::string(what) + " must be a non-negative integer: " + s);
}

struct CommonFlags {
  std::string config;
  std::string data_dir;
  bool mock = false;
  std::optional<std::uint64_t> run_seed;
  std::string serve_addr;
};

// File, then environment, then flags; later layers win.
earth::RunConfig resolve(const CommonFlags& f, bool require_config) {
  earth::RunConfig cfg;
  if (!f.config.empty()) {
    cfg = earth::load_run_config(f.config);
  } else if (require_config && !f.mock) {
    throw Error(ErrorCode::config, "--config is required unless --mock is given");
  }
  if (auto v = env("EARTH_DATA_DIR")) cfg.data_dir = *v;
  if (auto v = env("EARTH_RUN_SEED")) cfg.pipeline.run_seed = parse_seed(*v, "EARTH_RUN_SEED");
  if (auto v = env("EARTH_SERVE_ADDR")) cfg.serve_addr = *v;
  if (env("EARTH_MOCK") == std::optional<std::string>("1")) cfg.backends.mock = true;

  if (!f.data_dir.empty()) cfg.data_dir = f.data_dir;
  if (f.run_seed) cfg.pipeline.run_seed = *f.run_seed;
  if (!f.serve_addr.empty()) cfg.serve_addr = f.serve_addr;
  if (f.mock) cfg.backends.mock = true;
  cfg.gateway.run_seed = cfg.pipeline.run_seed;
  if (cfg.data_dir.empty()) cfg.data_dir = earth::store::RunStore::default_root().string();
  cfg.pipeline.validate();
  return cfg;
}

int cmd_run(const CommonFlags& f, const std::string& stage) {
  auto cfg = resolve(f, true);
  earth::pipeline::RunOptions opts;
  if (!stage.empty()) opts.stop_after = earth::stage_from_string(stage);
  opts.config_snapshot = earth::to_json(cfg);
  earth::gateway::Gateway gw(earth::build_backends(cfg), cfg.gateway);
  earth::store::RunStore store(cfg.data_dir);
  const auto m = earth::pipeline::run_full_pipeline(cfg.pipeline, gw, store, opts);
  const auto path = store.run_dir(m.run_id) / "manifest.json";
  std::cout << path.string() << "\n";
  if (m.status == earth::store::RunStatus::failed) return fail("stage_failed", m.error, 1);
  return 0;
}

std::vector<std::pair<std::string, double>> parse_logprobs(const std::string& cell) {
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(cell);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ';')) {
    item = earth::text::trim(item);
    if (item.empty()) continue;
    out.emplace_back("t" + std::to_string(i++), earth::csv::parse_double(item));
  }
  return out;
}

int cmd_score(const CommonFlags& f, const std::string& in_path, const std::string& out_path,
              const std::string& reference_column, const std::string& text_column) {
  CommonFlags g = f;
  if (g.config.empty()) g.mock = true;
  auto cfg = resolve(g, false);
  auto data = earth::store::read_whole_file(in_path);
  if (!data) throw Error(ErrorCode::not_found, "input file not found: " + in_path);
  const auto rows = earth::csv::parse(*data);
  if (rows.empty()) throw Error(ErrorCode::invalid_argument, "input CSV has no header");
  const auto& header = rows.front();
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto ref_i = col(reference_column);
  const auto text_i = col(text_column);
  if (!ref_i || !text_i) {
    throw Error(ErrorCode::invalid_argument, "input CSV needs '" + reference_column + "' and '" + text_column + "' columns");
  }
  const auto lp_i = col("logprobs");

  auto backends = earth::build_backends(cfg);
  backends.text.reset();
  earth::gateway::Gateway gw(backends, cfg.gateway);
  earth::pipeline::Engine engine(cfg.pipeline, gw);

  std::string out;
  earth::csv::append_row(out, std::vector<std::string>{reference_column, text_column, "novelty", "surprise",
                                                      "divergence", "relevance", "relevance_method", "creativity_a",
                                                      "r_score", "t_score"});
  auto num = [](double v) { return earth::csv::format_double(v); };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::invalid_argument, "input row " + std::to_string(r) + " has the wrong number of fields");
    }
    const auto& ref = row[*ref_i];
    const auto& txt = row[*text_i];
    std::optional<double> surprise;
    if (lp_i && !row[*lp_i].empty()) {
      const auto lp = parse_logprobs(row[*lp_i]);
      std::vector<std::string> toks;
      std::vector<double> vals;
      for (const auto& [t, v] : lp) {
        toks.push_back(t);
        vals.push_back(v);
      }
      surprise = earth::scoring::surprise(earth::scoring::TokenLogprobs(toks, vals));
    }
    const auto s = engine.score(txt, ref, surprise.value_or(0.0));
    std::vector<std::string> o{ref, txt, num(s.novelty)};
    o.push_back(surprise ? num(s.surprise) : "");
    o.push_back(num(s.divergence));
    o.push_back(num(s.relevance));
    o.push_back(std::string(earth::scoring::to_string(s.relevance_method)));
    o.push_back(surprise ? num(s.creativity_a) : "");
    o.push_back(surprise ? num(s.r_score) : "");
    o.push_back(num(s.t_score));
    earth::csv::append_row(out, o);
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << out;
  } else {
    earth::store::atomic_write(out_path, out);
  }
  return 0;
}

int cmd_report(const CommonFlags& f, const std::string& run_id) {
  auto cfg = resolve(f, false);
  earth::store::RunStore store(cfg.data_dir);
  if (!store.has_run(run_id)) throw Error(ErrorCode::not_found, "unknown run: " + run_id);
  const auto pipeline_cfg = earth::pipeline_config_from_json(store.load_config(run_id));
  for (const auto& p : earth::report::emit_report(store, run_id, pipeline_cfg)) {
    std::cout << (store.run_dir(run_id) / p).string() << "\n";
  }
  return 0;
}

earth::service::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_serve(const CommonFlags& f) {
  auto cfg = resolve(f, false);
  const auto [host, port] = earth::service::parse_address(cfg.serve_addr);
  earth::store::RunStore store(cfg.data_dir);
  earth::feedback::FeedbackHub hub(store);
  earth::service::Service svc(store, hub, {cfg.cors_origin});
  const int bound = svc.bind(host, port);
  if (bound < 0) return fail("storage", "cannot bind " + cfg.serve_addr, 1);
  std::cout << "listening on " << host << ":" << bound << "\n" << std::flush;
  g_service = &svc;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  svc.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"earth: error-driven creative slogan pipeline"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string seed_text;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON config file");
    sub->add_option("--data-dir", flags.data_dir, "data root (overrides EARTH_DATA_DIR)");
    sub->add_flag("--mock", flags.mock, "use deterministic mock backends");
    sub->add_option("--run-seed", seed_text, "run seed (overrides EARTH_RUN_SEED)");
  };

  auto* run = app.add_subcommand("run", "execute E -> A -> R -> T and persist the run");
  add_common(run);
  std::string stage;
  run->add_option("--stage", stage, "stop after this stage (E, A, R or T)");

  auto* score = app.add_subcommand("score", "score (prompt, text) rows of a CSV file");
  add_common(score);
  std::string in_path, out_path, ref_col = "prompt", text_col = "text";
  score->add_option("--in", in_path, "input CSV")->required();
  score->add_option("--out", out_path, "output CSV (stdout when omitted)");
  score->add_option("--reference-column", ref_col, "reference column name");
  score->add_option("--text-column", text_col, "text column name");

  auto* report = app.add_subcommand("report", "rebuild the report bundle of a stored run");
  add_common(report);
  std::string run_id;
  report->add_option("--run", run_id, "run id")->required();

  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  add_common(serve);
  serve->add_option("--serve-addr", flags.serve_addr, "host:port (overrides EARTH_SERVE_ADDR)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (!seed_text.empty()) flags.run_seed = parse_seed(seed_text, "--run-seed");
    if (*run) return cmd_run(flags, stage);
    if (*score) return cmd_score(flags, in_path, out_path, ref_col, text_col);
    if (*report) return cmd_report(flags, run_id);
    if (*serve) return cmd_serve(flags);
  } catch (const Error& e) {
    return fail(earth::to_string(e.code()), e.what(), exit_code_for(e.code()));
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 2;
}
