#include "earth/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "earth/error.hpp"
#include "earth/text.hpp"

namespace earth::stats {

namespace {

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Two-pass sample variance.
double sample_variance(std::span<const double> xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double two_sided_p(double t, double df) {
  if (!(df > 0.0) || !std::isfinite(df)) throw Error(ErrorCode::invalid_argument, "degrees of freedom must be > 0");
  if (std::isnan(t)) throw Error(ErrorCode::invalid_argument, "t statistic is NaN");
  if (t == 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t_distribution<double> dist(df);
  const double p = 2.0 * boost::math::cdf(dist, -std::abs(t));
  return std::clamp(p, 0.0, 1.0);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::invalid_argument, "paired t-test: length mismatch");
  if (a.size() < 2) throw Error(ErrorCode::degenerate_input, "paired t-test: need at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
  const double md = mean_of(d);
  const double var = sample_variance(d, md);
  if (var == 0.0) throw Error(ErrorCode::degenerate_input, "paired t-test: differences have zero variance");
  const double n = static_cast<double>(d.size());
  TTestResult r;
  r.t_statistic = md / (std::sqrt(var) / std::sqrt(n));
  r.degrees_of_freedom = n - 1.0;
  r.p_value = two_sided_p(r.t_statistic, r.degrees_of_freedom);
  r.mean_a = mean_of(a);
  r.mean_b = mean_of(b);
  return r;
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::degenerate_input, "welch t-test: need at least 2 samples per group");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  if (va == 0.0 && vb == 0.0) throw Error(ErrorCode::degenerate_input, "welch t-test: both samples have zero variance");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  TTestResult r;
  r.t_statistic = (ma - mb) / std::sqrt(va + vb);
  r.degrees_of_freedom = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = two_sided_p(r.t_statistic, r.degrees_of_freedom);
  r.mean_a = ma;
  r.mean_b = mb;
  return r;
}

Descriptive descriptive_stats(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorCode::invalid_argument, "descriptive stats of an empty list");
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  Descriptive d;
  d.count = xs.size();
  d.mean = mean_of(xs);
  d.sd = std::sqrt(sample_variance(xs, d.mean));
  d.min = sorted.front();
  d.max = sorted.back();
  d.q1 = quantile_sorted(sorted, 0.25);
  d.median = quantile_sorted(sorted, 0.5);
  d.q3 = quantile_sorted(sorted, 0.75);
  return d;
}

LengthDeltaSummary length_delta_stats(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "length delta stats of an empty list");
  LengthDeltaSummary s;
  std::vector<double> seed_len;
  std::vector<double> variant_len;
  for (const auto& [seed, variant] : pairs) {
    seed_len.push_back(static_cast<double>(text::char_length(text::trim(seed))));
    variant_len.push_back(static_cast<double>(text::char_length(text::trim(variant))));
    s.deltas.push_back(variant_len.back() - seed_len.back());
  }
  const auto d = descriptive_stats(s.deltas);
  s.mean_delta = d.mean;
  s.sd_delta = d.sd;
  try {
    s.test = paired_t_test(seed_len, variant_len);
  } catch (const Error& e) {
    s.test_omitted_reason = e.what();
  }
  return s;
}

}  // namespace earth::stats
