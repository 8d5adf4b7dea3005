#pragma once

// Figure and table datasets rebuilt from a run's persisted tables, so a
// report never depends on in-memory state from the run that produced it.

#include <string>
#include <vector>

#include "json.hpp"

#include "earth/config.hpp"

namespace earth::store {
class RunStore;
}

namespace earth::report {

inline constexpr int kLengthHistogramBinWidth = 5;

// Writes report/ under the run directory; returns the files written,
// relative to the run directory.
std::vector<std::string> emit_report(store::RunStore& store, const std::string& run_id, const PipelineConfig& cfg);

// The summary.json content alone, for callers that only need numbers.
nlohmann::json report_summary(const store::RunStore& store, const std::string& run_id, const PipelineConfig& cfg);

}  // namespace earth::report
