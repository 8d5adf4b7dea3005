#include "earth/run_store.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "earth/csv.hpp"
#include "earth/error.hpp"
#include "earth/text.hpp"

namespace earth::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::running: return "running";
    case RunStatus::complete: return "complete";
    case RunStatus::failed: return "failed";
    case RunStatus::partial: return "partial";
  }
  return "failed";
}

RunStatus run_status_from_string(std::string_view s) {
  if (s == "running") return RunStatus::running;
  if (s == "complete") return RunStatus::complete;
  if (s == "failed") return RunStatus::failed;
  if (s == "partial") return RunStatus::partial;
  throw Error(ErrorCode::schema_mismatch, "unknown run status: " + std::string(s));
}

json to_json(const RunManifest& m) {
  json reports = json::array();
  for (const auto& r : m.stage_reports) reports.push_back(earth::to_json(r));
  json j{{"run_id", m.run_id},
         {"created_at", m.created_at},
         {"config", m.config},
         {"backends", m.backends},
         {"run_seed", m.run_seed},
         {"stage_reports", reports},
         {"artifacts", m.artifacts},
         {"status", std::string(to_string(m.status))},
         {"notes", m.notes}};
  j["error"] = m.error.empty() ? json(nullptr) : json(m.error);
  return j;
}

RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
    m.config = j.at("config");
    m.backends = j.at("backends").get<std::map<std::string, std::string>>();
    m.run_seed = j.at("run_seed").get<std::uint64_t>();
    for (const auto& r : j.at("stage_reports")) m.stage_reports.push_back(stage_report_from_json(r));
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    m.status = run_status_from_string(j.at("status").get<std::string>());
    if (j.contains("error") && !j["error"].is_null()) m.error = j["error"].get<std::string>();
    if (j.contains("notes")) m.notes = j["notes"].get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, std::string("manifest: ") + e.what());
  }
}

std::string candidates_csv_header() {
  std::string out;
  const std::vector<std::string> cols(std::begin(kCandidateColumns), std::end(kCandidateColumns));
  csv::append_row(out, cols);
  return out;
}

std::string candidates_to_csv(std::span<const Candidate> rows, bool with_header) {
  std::string out = with_header ? candidates_csv_header() : "";
  for (const auto& c : rows) {
    std::vector<std::string> f{c.id,     std::string(to_string(c.stage)), c.method, c.theme, c.prompt,
                               c.parent_id.value_or(""), c.text};
    if (c.scores) {
      const auto& s = *c.scores;
      for (double v : {s.novelty, s.surprise, s.divergence, s.relevance, s.creativity_a, s.r_score, s.t_score}) {
        f.push_back(csv::format_double(v));
      }
    } else {
      f.resize(f.size() + 7);
    }
    csv::append_row(out, f);
  }
  return out;
}

std::vector<Candidate> candidates_from_csv(std::string_view data) {
  const auto rows = csv::parse(data);
  constexpr std::size_t kCols = std::size(kCandidateColumns);
  if (rows.empty()) throw Error(ErrorCode::schema_mismatch, "candidate table has no header");
  const auto& header = rows.front();
  if (header.size() != kCols || !std::equal(header.begin(), header.end(), std::begin(kCandidateColumns))) {
    throw Error(ErrorCode::schema_mismatch, "candidate table header does not match the expected columns");
  }
  std::vector<Candidate> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != kCols) {
      throw Error(ErrorCode::schema_mismatch, "candidate row " + std::to_string(i) + " has " +
                                                  std::to_string(r.size()) + " fields");
    }
    Candidate c;
    c.id = r[0];
    try {
      c.stage = stage_from_string(r[1]);
    } catch (const Error& e) {
      throw Error(ErrorCode::schema_mismatch, e.what());
    }
    c.method = r[2];
    c.theme = r[3];
    c.prompt = r[4];
    if (!r[5].empty()) c.parent_id = r[5];
    c.text = r[6];
    const bool any = std::any_of(r.begin() + 7, r.end(), [](const std::string& s) { return !s.empty(); });
    if (any) {
      scoring::ScoreBreakdown s;
      s.novelty = csv::parse_double(r[7]);
      s.surprise = csv::parse_double(r[8]);
      s.divergence = csv::parse_double(r[9]);
      s.relevance = csv::parse_double(r[10]);
      s.creativity_a = csv::parse_double(r[11]);
      s.r_score = csv::parse_double(r[12]);
      s.t_score = csv::parse_double(r[13]);
      c.scores = s;
    }
    out.push_back(std::move(c));
  }
  return out;
}

void atomic_write(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  fs::create_directories(path.parent_path());
  const auto tmp = path.parent_path() / ("." + path.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" +
                                         std::to_string(counter++));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::storage, "cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::storage, "write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::storage, "rename into " + path.string() + " failed: " + ec.message());
  }
}

std::optional<std::string> read_whole_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "runs", ec);
  if (ec) throw Error(ErrorCode::storage, "cannot create data root " + root_.string() + ": " + ec.message());
}

fs::path RunStore::default_root() {
  if (const char* env = std::getenv("EARTH_DATA_DIR"); env && *env) return env;
  return "earth-data";
}

std::string RunStore::create_run(const json& config_snapshot) {
  std::random_device rd;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const auto now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "run-%04d%02d%02dT%02d%02d%02dZ-%06x", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, rd() & 0xFFFFFFu);
    const std::string id = buf;
    std::error_code ec;
    if (fs::create_directory(root_ / "runs" / id, ec)) {
      atomic_write(root_ / "runs" / id / "config.json", config_snapshot.dump(2) + "\n");
      return id;
    }
    if (ec) throw Error(ErrorCode::storage, "cannot create run directory: " + ec.message());
  }
  throw Error(ErrorCode::storage, "could not allocate a unique run id");
}

bool RunStore::has_run(const std::string& run_id) const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos) return false;
  return fs::is_directory(root_ / "runs" / run_id);
}

std::vector<std::string> RunStore::list_runs() const {
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(root_ / "runs", ec)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

fs::path RunStore::run_dir(const std::string& run_id) const {
  if (!has_run(run_id)) throw Error(ErrorCode::not_found, "unknown run: " + run_id);
  return root_ / "runs" / run_id;
}

std::mutex& RunStore::run_mutex(const std::string& run_id) const {
  std::lock_guard lk(registry_mu_);
  auto& slot = run_locks_[run_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::size_t RunStore::append_candidates(const std::string& run_id, Stage stage, std::span<const Candidate> rows) {
  const auto dir = run_dir(run_id);
  std::lock_guard lk(run_mutex(run_id));
  for (const auto& c : rows) {
    if (c.stage != stage) {
      throw Error(ErrorCode::schema_mismatch, "candidate " + c.id + " belongs to stage " +
                                                  std::string(to_string(c.stage)) + ", not " +
                                                  std::string(to_string(stage)));
    }
  }
  const auto table = dir / ("candidates_" + std::string(to_string(stage)) + ".csv");
  std::vector<Candidate> existing;
  if (auto data = read_whole_file(table)) existing = candidates_from_csv(*data);

  std::set<std::string> ids;
  for (const auto& c : existing) ids.insert(c.id);
  for (const auto& c : rows) {
    if (!ids.insert(c.id).second) throw Error(ErrorCode::conflict, "duplicate candidate id " + c.id);
  }

  std::string jsonl = read_whole_file(dir / "candidates.jsonl").value_or("");
  for (const auto& c : rows) jsonl += earth::to_json(c).dump() + "\n";
  existing.insert(existing.end(), rows.begin(), rows.end());

  atomic_write(table, candidates_to_csv(existing));
  atomic_write(dir / "candidates.jsonl", jsonl);
  return rows.size();
}

std::vector<Candidate> RunStore::load_candidates(const std::string& run_id, const CandidateFilter& filter) const {
  const auto dir = run_dir(run_id);
  std::lock_guard lk(run_mutex(run_id));

  std::map<std::string, json> full;
  if (auto data = read_whole_file(dir / "candidates.jsonl")) {
    for (const auto& line : text::split_lines(*data)) {
      if (text::trim(line).empty()) continue;
      try {
        auto j = json::parse(line);
        auto id = j.at("id").get<std::string>();
        full[id] = std::move(j);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_mismatch, std::string("candidates.jsonl: ") + e.what());
      }
    }
  }

  std::vector<Candidate> out;
  for (Stage s : kAllStages) {
    if (filter.stage && *filter.stage != s) continue;
    auto data = read_whole_file(dir / ("candidates_" + std::string(to_string(s)) + ".csv"));
    if (!data) continue;
    for (auto& c : candidates_from_csv(*data)) {
      if (filter.method && c.method != *filter.method) continue;
      if (auto it = full.find(c.id); it != full.end()) {
        const auto& j = it->second;
        c.created_at = j.value("created_at", "");
        c.flag = j.value("flag", "");
        if (c.scores && j.contains("scores") && j["scores"].contains("relevance_method")) {
          c.scores->relevance_method =
              scoring::relevance_method_from_string(j["scores"]["relevance_method"].get<std::string>());
        }
      }
      out.push_back(std::move(c));
    }
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
  if (filter.after_id) {
    out.erase(out.begin(), std::upper_bound(out.begin(), out.end(), *filter.after_id,
                                            [](const std::string& id, const Candidate& c) { return id < c.id; }));
  }
  if (filter.limit && out.size() > *filter.limit) out.resize(*filter.limit);
  return out;
}

void RunStore::write_manifest(const RunManifest& manifest) {
  const auto dir = run_dir(manifest.run_id);
  std::lock_guard lk(run_mutex(manifest.run_id));
  atomic_write(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
}

std::optional<RunManifest> RunStore::load_manifest(const std::string& run_id) const {
  if (!has_run(run_id)) return std::nullopt;
  auto data = read_whole_file(root_ / "runs" / run_id / "manifest.json");
  if (!data) return std::nullopt;
  try {
    return manifest_from_json(json::parse(*data));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, std::string("manifest.json: ") + e.what());
  }
}

json RunStore::load_config(const std::string& run_id) const {
  auto data = read_whole_file(run_dir(run_id) / "config.json");
  if (!data) throw Error(ErrorCode::not_found, "run " + run_id + " has no config snapshot");
  try {
    return json::parse(*data);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, std::string("config.json: ") + e.what());
  }
}

namespace {

fs::path checked_relative(const fs::path& relative) {
  if (relative.empty() || relative.is_absolute()) throw Error(ErrorCode::invalid_argument, "path must be relative");
  for (const auto& part : relative) {
    if (part == "..") throw Error(ErrorCode::invalid_argument, "path may not leave the run directory");
  }
  return relative;
}

}  // namespace

void RunStore::write_file(const std::string& run_id, const fs::path& relative, std::string_view content) {
  const auto path = run_dir(run_id) / checked_relative(relative);
  atomic_write(path, content);
}

std::optional<std::string> RunStore::read_file(const std::string& run_id, const fs::path& relative) const {
  return read_whole_file(run_dir(run_id) / checked_relative(relative));
}

bool RunStore::has_file(const std::string& run_id, const fs::path& relative) const {
  return fs::is_regular_file(run_dir(run_id) / checked_relative(relative));
}

}  // namespace earth::store
