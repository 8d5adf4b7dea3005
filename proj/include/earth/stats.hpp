#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace earth::stats {

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;  // two-sided
  double degrees_of_freedom = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
};

// Two-sided p-value of |t| under Student's t with df degrees of freedom.
double two_sided_p(double t, double df);

// Paired test on d = b - a; t = mean(d) / (sd(d) / sqrt(n)), df = n - 1.
// Throws on length mismatch, n < 2, or zero-variance differences.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Welch's unequal-variance test; t = (mean_a - mean_b) / se with the
// Welch-Satterthwaite df. Throws on n < 2 in either sample or when both
// variances are zero.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct Descriptive {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample (n - 1); 0 for a single value
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

// Quartiles by linear interpolation between order statistics.
Descriptive descriptive_stats(std::span<const double> xs);

struct LengthDeltaSummary {
  std::vector<double> deltas;
  double mean_delta = 0.0;
  double sd_delta = 0.0;
  std::optional<TTestResult> test;
  std::string test_omitted_reason;
};

// Characters (code points) after trimming; delta = len(variant) - len(seed).
// The paired test runs on the deltas against zero; when it is undefined the
// summary is still returned with the reason recorded.
LengthDeltaSummary length_delta_stats(std::span<const std::pair<std::string, std::string>> pairs);

}  // namespace earth::stats
