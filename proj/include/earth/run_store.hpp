#pragma once

// One directory per run under a data root:
//   config.json  manifest.json  candidates_{E,A,R,T}.csv  candidates.jsonl
//   ratings.csv  batches.json  images/<candidate>.png  report/...
// Every write goes to a temporary file first and is renamed into place, so
// readers only ever see whole batches.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "earth/candidate.hpp"

namespace earth::store {

enum class RunStatus { running, complete, failed, partial };

std::string_view to_string(RunStatus s);
RunStatus run_status_from_string(std::string_view s);

struct RunManifest {
  std::string run_id;
  std::string created_at;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> backends;
  std::uint64_t run_seed = 0;
  std::vector<StageReport> stage_reports;
  std::vector<std::string> artifacts;  // relative to the run directory
  RunStatus status = RunStatus::running;
  std::string error;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

inline constexpr const char* kCandidateColumns[] = {
    "id",        "stage",      "method",    "theme",        "prompt",  "parent_id", "text",
    "novelty",   "surprise",   "divergence", "relevance",   "creativity_a", "r_score", "t_score"};

std::string candidates_csv_header();
std::string candidates_to_csv(std::span<const Candidate> rows, bool with_header = true);
std::vector<Candidate> candidates_from_csv(std::string_view data);  // schema_mismatch on bad header/rows

struct CandidateFilter {
  std::optional<Stage> stage;
  std::optional<std::string> method;
  std::optional<std::string> after_id;  // cursor: ids strictly greater
  std::optional<std::size_t> limit;
};

class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  // EARTH_DATA_DIR when set, ./earth-data otherwise.
  static std::filesystem::path default_root();

  const std::filesystem::path& root() const { return root_; }

  std::string create_run(const nlohmann::json& config_snapshot);
  bool has_run(const std::string& run_id) const;
  std::vector<std::string> list_runs() const;
  std::filesystem::path run_dir(const std::string& run_id) const;  // not_found for unknown runs

  // Atomic per batch; every row must belong to `stage` and carry a fresh id.
  std::size_t append_candidates(const std::string& run_id, Stage stage, std::span<const Candidate> rows);
  std::vector<Candidate> load_candidates(const std::string& run_id, const CandidateFilter& filter = {}) const;

  void write_manifest(const RunManifest& manifest);
  std::optional<RunManifest> load_manifest(const std::string& run_id) const;
  nlohmann::json load_config(const std::string& run_id) const;

  void write_file(const std::string& run_id, const std::filesystem::path& relative, std::string_view content);
  std::optional<std::string> read_file(const std::string& run_id, const std::filesystem::path& relative) const;
  bool has_file(const std::string& run_id, const std::filesystem::path& relative) const;

  std::mutex& run_mutex(const std::string& run_id) const;

 private:
  std::filesystem::path root_;
  mutable std::mutex registry_mu_;
  mutable std::map<std::string, std::unique_ptr<std::mutex>> run_locks_;
};

// Writes content to path through a sibling temp file and rename.
void atomic_write(const std::filesystem::path& path, std::string_view content);
std::optional<std::string> read_whole_file(const std::filesystem::path& path);

}  // namespace earth::store
