#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "earth/scoring.hpp"

namespace earth {

enum class Stage { E, A, R, T };

inline constexpr Stage kAllStages[] = {Stage::E, Stage::A, Stage::R, Stage::T};

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);  // throws invalid_argument

struct Candidate {
  std::string id;
  Stage stage = Stage::E;
  std::string method;  // sampling profile name
  std::string theme;
  std::string prompt;
  std::optional<std::string> parent_id;  // null for E
  std::string text;  // post-cleaning
  std::optional<scoring::ScoreBreakdown> scores;
  std::string created_at;
  std::string flag;  // e.g. "unrefined"; empty when nothing to note

  bool operator==(const Candidate& other) const;
};

struct NamedValue {
  std::string name;
  double value = 0.0;
};

struct StageReport {
  Stage stage = Stage::E;
  std::size_t input_count = 0;
  std::size_t output_count = 0;
  std::string selection_rule;
  std::vector<NamedValue> statistics;
  std::vector<std::string> notes;

  const double* statistic(std::string_view name) const;
};

nlohmann::json to_json(const scoring::ScoreBreakdown& s);
scoring::ScoreBreakdown score_breakdown_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StageReport& r);
StageReport stage_report_from_json(const nlohmann::json& j);

}  // namespace earth
