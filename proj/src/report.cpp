#include "earth/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "earth/csv.hpp"
#include "earth/error.hpp"
#include "earth/feedback.hpp"
#include "earth/pipeline.hpp"
#include "earth/run_store.hpp"
#include "earth/text.hpp"

namespace earth::report {

using nlohmann::json;

namespace {

std::string num(double v) { return csv::format_double(v); }

struct Bundle {
  std::vector<std::pair<std::string, std::string>> files;  // report-relative name, content
  json summary = json::object();
};

void add_table(Bundle& b, const std::string& name, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  csv::append_row(out, header);
  for (const auto& r : rows) csv::append_row(out, r);
  b.files.emplace_back(name, std::move(out));
}

Bundle build(const store::RunStore& store, const std::string& run_id, const PipelineConfig& cfg) {
  Bundle b;
  const auto all = store.load_candidates(run_id);
  pipeline::Lineage lineage;
  lineage.add(all);

  std::map<Stage, std::vector<Candidate>> by_stage;
  for (const auto& c : all) by_stage[c.stage].push_back(c);
  json counts = json::object();
  for (Stage s : kAllStages) counts[std::string(to_string(s))] = by_stage[s].size();
  b.summary["run_id"] = run_id;
  b.summary["candidate_counts"] = counts;

  // Length deltas and the novelty-surprise landscape come from the A table.
  const auto& a_rows = by_stage[Stage::A];
  if (!a_rows.empty()) {
    std::set<std::string> selected;
    for (const auto& r : by_stage[Stage::R]) {
      if (r.parent_id) selected.insert(*r.parent_id);
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::vector<std::string>> delta_rows, scatter_rows;
    for (const auto& a : a_rows) {
      const auto& root = lineage.root(a);
      pairs.emplace_back(root.text, a.text);
      const auto ls = text::char_length(text::trim(root.text));
      const auto lv = text::char_length(text::trim(a.text));
      delta_rows.push_back({a.id, root.id, std::to_string(ls), std::to_string(lv),
                            std::to_string(static_cast<long>(lv) - static_cast<long>(ls))});
      if (a.scores) {
        scatter_rows.push_back({a.id, a.parent_id.value_or(""), num(a.scores->novelty), num(a.scores->surprise),
                                num(a.scores->relevance), num(a.scores->r_score), selected.count(a.id) ? "1" : "0"});
      }
    }
    const auto summary = stats::length_delta_stats(pairs);
    add_table(b, "length_deltas.csv", {"variant_id", "seed_id", "seed_length", "variant_length", "delta"}, delta_rows);

    std::map<long, std::size_t> bins;
    for (double d : summary.deltas) {
      const long lo = static_cast<long>(std::floor(d / kLengthHistogramBinWidth)) * kLengthHistogramBinWidth;
      ++bins[lo];
    }
    std::vector<std::vector<std::string>> hist_rows;
    if (!bins.empty()) {
      for (long lo = bins.begin()->first; lo <= bins.rbegin()->first; lo += kLengthHistogramBinWidth) {
        const auto it = bins.find(lo);
        hist_rows.push_back({std::to_string(lo), std::to_string(lo + kLengthHistogramBinWidth),
                             std::to_string(it == bins.end() ? 0 : it->second)});
      }
    }
    add_table(b, "length_delta_histogram.csv", {"bin_lower", "bin_upper", "count"}, hist_rows);
    add_table(b, "novelty_surprise_scatter.csv",
              {"id", "parent_id", "novelty", "surprise", "relevance", "r_score", "selected"}, scatter_rows);
    b.summary["length_delta"] = pipeline::to_json(summary);
  }

  try {
    const auto cmp = pipeline::stage_comparison(all, cfg.e_methods.empty() ? "std" : cfg.e_methods.front(),
                                                cfg.seed_method);
    std::vector<std::vector<std::string>> mean_rows, test_rows;
    for (const auto& g : cmp.groups) mean_rows.push_back({g.name, std::to_string(g.n), num(g.mean), num(g.sd)});
    for (const auto& t : cmp.tests) {
      if (t.result) {
        test_rows.push_back({t.name, t.from, t.to, num(t.result->t_statistic), num(t.result->p_value),
                             num(t.result->degrees_of_freedom), num(t.result->mean_a), num(t.result->mean_b), ""});
      } else {
        test_rows.push_back({t.name, t.from, t.to, "", "", "", "", "", t.omitted_reason});
      }
    }
    add_table(b, "stage_means.csv", {"group", "n", "mean", "sd"}, mean_rows);
    add_table(b, "stage_tests.csv", {"name", "from", "to", "t", "p", "df", "mean_a", "mean_b", "omitted_reason"},
              test_rows);
    b.summary["stage_comparison"] = pipeline::to_json(cmp);
  } catch (const Error& e) {
    b.summary["stage_comparison"] = nullptr;
    b.summary["stage_comparison_omitted_reason"] = e.what();
  }

  if (!by_stage[Stage::T].empty()) {
    const auto c = pipeline::compression_stats(by_stage[Stage::R], by_stage[Stage::T]);
    add_table(b, "compression_stats.csv", {"metric", "before", "after", "change_pct"},
              {{"length", num(c.mean_length_before), num(c.mean_length_after), num(c.length_change_pct)},
               {"novelty", num(c.mean_novelty_before), num(c.mean_novelty_after), num(c.novelty_change_pct)},
               {"relevance", num(c.mean_relevance_before), num(c.mean_relevance_after), num(c.relevance_change_pct)}});
    b.summary["compression"] = pipeline::to_json(c);
  }

  if (auto data = store.read_file(run_id, "crossmodal.csv")) {
    const auto rows = csv::parse(*data);
    double sim = 0.0, f1 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      sim += csv::parse_double(rows[i].at(3));
      f1 += csv::parse_double(rows[i].at(5));
      ++n;
    }
    b.summary["crossmodal"] = {{"items", n},
                               {"mean_similarity", n ? sim / static_cast<double>(n) : 0.0},
                               {"mean_caption_f1", n ? f1 / static_cast<double>(n) : 0.0}};
  }

  if (auto data = store.read_file(run_id, "ratings.csv")) {
    std::map<std::string, std::vector<feedback::RatingRecord>> per_batch;
    for (auto& [batch, r] : feedback::ratings_from_csv(*data)) per_batch[batch].push_back(std::move(r));
    if (!per_batch.empty()) {
      json h = json::object();
      for (const auto& [batch, recs] : per_batch) h[batch] = feedback::analytics_json(recs, all, cfg.profiles);
      b.files.emplace_back("h_analytics.json", json{{"batches", h}}.dump(2) + "\n");
    }
  }

  std::vector<std::string> names;
  for (const auto& f : b.files) names.push_back("report/" + f.first);
  names.push_back("report/summary.json");
  b.summary["files"] = names;
  return b;
}

}  // namespace

json report_summary(const store::RunStore& store, const std::string& run_id, const PipelineConfig& cfg) {
  return build(store, run_id, cfg).summary;
}

std::vector<std::string> emit_report(store::RunStore& store, const std::string& run_id, const PipelineConfig& cfg) {
  auto b = build(store, run_id, cfg);
  std::vector<std::string> written;
  for (const auto& [name, content] : b.files) {
    store.write_file(run_id, "report/" + name, content);
    written.push_back("report/" + name);
  }
  store.write_file(run_id, "report/summary.json", b.summary.dump(2) + "\n");
  written.push_back("report/summary.json");
  return written;
}

}  // namespace earth::report
