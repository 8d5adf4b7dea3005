#include "earth/candidate.hpp"

#include <limits>

#include "earth/error.hpp"

namespace earth {

using nlohmann::json;

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::E: return "E";
    case Stage::A: return "A";
    case Stage::R: return "R";
    case Stage::T: return "T";
  }
  return "?";
}

Stage stage_from_string(std::string_view s) {
  if (s == "E") return Stage::E;
  if (s == "A") return Stage::A;
  if (s == "R") return Stage::R;
  if (s == "T") return Stage::T;
  throw Error(ErrorCode::invalid_argument, "unknown stage: " + std::string(s));
}

namespace {

bool same_scores(const std::optional<scoring::ScoreBreakdown>& a, const std::optional<scoring::ScoreBreakdown>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->novelty == b->novelty && a->surprise == b->surprise && a->divergence == b->divergence &&
         a->relevance == b->relevance && a->creativity_a == b->creativity_a && a->r_score == b->r_score &&
         a->t_score == b->t_score;
}

}  // namespace

bool Candidate::operator==(const Candidate& o) const {
  return id == o.id && stage == o.stage && method == o.method && theme == o.theme && prompt == o.prompt &&
         parent_id == o.parent_id && text == o.text && same_scores(scores, o.scores);
}

const double* StageReport::statistic(std::string_view name) const {
  for (const auto& s : statistics) {
    if (s.name == name) return &s.value;
  }
  return nullptr;
}

json to_json(const scoring::ScoreBreakdown& s) {
  return json{{"novelty", s.novelty},           {"surprise", s.surprise}, {"divergence", s.divergence},
              {"relevance", s.relevance},       {"creativity_a", s.creativity_a},
              {"r_score", s.r_score},           {"t_score", s.t_score},
              {"relevance_method", scoring::to_string(s.relevance_method)}};
}

scoring::ScoreBreakdown score_breakdown_from_json(const json& j) {
  scoring::ScoreBreakdown s;
  s.novelty = j.at("novelty").get<double>();
  s.surprise = j.at("surprise").get<double>();
  s.divergence = j.at("divergence").get<double>();
  s.relevance = j.at("relevance").get<double>();
  s.creativity_a = j.at("creativity_a").get<double>();
  s.r_score = j.at("r_score").get<double>();
  s.t_score = j.at("t_score").get<double>();
  s.relevance_method = scoring::relevance_method_from_string(j.value("relevance_method", std::string("unknown")));
  return s;
}

json to_json(const Candidate& c) {
  json j{{"id", c.id},         {"stage", to_string(c.stage)}, {"method", c.method},
         {"theme", c.theme},   {"prompt", c.prompt},          {"parent_id", nullptr},
         {"text", c.text},     {"scores", nullptr},           {"created_at", c.created_at}};
  if (c.parent_id) j["parent_id"] = *c.parent_id;
  if (c.scores) j["scores"] = to_json(*c.scores);
  if (!c.flag.empty()) j["flag"] = c.flag;
  return j;
}

Candidate candidate_from_json(const json& j) {
  try {
    Candidate c;
    c.id = j.at("id").get<std::string>();
    c.stage = stage_from_string(j.at("stage").get<std::string>());
    c.method = j.value("method", std::string{});
    c.theme = j.value("theme", std::string{});
    c.prompt = j.value("prompt", std::string{});
    if (j.contains("parent_id") && !j["parent_id"].is_null()) c.parent_id = j["parent_id"].get<std::string>();
    c.text = j.at("text").get<std::string>();
    if (j.contains("scores") && !j["scores"].is_null()) c.scores = score_breakdown_from_json(j["scores"]);
    c.created_at = j.value("created_at", std::string{});
    c.flag = j.value("flag", std::string{});
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::schema_mismatch, std::string("candidate record: ") + e.what());
  }
}

json to_json(const StageReport& r) {
  json stats = json::object();
  for (const auto& s : r.statistics) stats[s.name] = s.value;
  return json{{"stage", to_string(r.stage)},         {"input_count", r.input_count},
              {"output_count", r.output_count},      {"selection_rule", r.selection_rule},
              {"statistics", stats},                 {"notes", r.notes}};
}

StageReport stage_report_from_json(const json& j) {
  StageReport r;
  r.stage = stage_from_string(j.at("stage").get<std::string>());
  r.input_count = j.at("input_count").get<std::size_t>();
  r.output_count = j.at("output_count").get<std::size_t>();
  r.selection_rule = j.value("selection_rule", std::string{});
  const auto stats = j.value("statistics", json::object());
  // Non-finite values serialize as null.
  for (const auto& [k, v] : stats.items()) {
    r.statistics.push_back({k, v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>()});
  }
  r.notes = j.value("notes", std::vector<std::string>{});
  return r;
}

}  // namespace earth
