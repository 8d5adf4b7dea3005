#pragma once

// Reference computations written independently of src/: no shared helpers,
// straight from the defining formulas. Tests compare library output to these.

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// JSD in bits over the explicit union of both supports.
inline double jsd(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  std::set<std::string> support;
  for (const auto& kv : p) support.insert(kv.first);
  for (const auto& kv : q) support.insert(kv.first);
  double kl_pm = 0.0, kl_qm = 0.0;
  for (const auto& t : support) {
    const double pi = p.count(t) ? p.at(t) : 0.0;
    const double qi = q.count(t) ? q.at(t) : 0.0;
    const double mi = 0.5 * (pi + qi);
    if (pi > 0.0) kl_pm += pi * (std::log(pi / mi) / std::log(2.0));
    if (qi > 0.0) kl_qm += qi * (std::log(qi / mi) / std::log(2.0));
  }
  return 0.5 * kl_pm + 0.5 * kl_qm;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct F1 {
  double p, r, f1;
};

// Every candidate token against every reference token; max similarity per side.
inline F1 greedy_f1(const std::vector<std::vector<double>>& cand, const std::vector<std::vector<double>>& ref) {
  auto clamp01 = [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); };
  double p = 0.0;
  for (const auto& c : cand) {
    double best = -2.0;
    for (const auto& r : ref) best = std::max(best, cosine(c, r));
    p += clamp01(best);
  }
  p /= static_cast<double>(cand.size());
  double r = 0.0;
  for (const auto& x : ref) {
    double best = -2.0;
    for (const auto& c : cand) best = std::max(best, cosine(x, c));
    r += clamp01(best);
  }
  r /= static_cast<double>(ref.size());
  return {p, r, p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r)};
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_var(const std::vector<double>& xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

// Student t density.
inline double t_pdf(double x, double df) {
  const double lg = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0);
  return std::exp(lg - 0.5 * std::log(df * M_PI) - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

inline double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                      double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double eps = 1e-13) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), eps, 60);
}

// Two-sided p = 1 - 2 * integral of the density over [0, |t|].
inline double two_sided_p(double t, double df) {
  const double x = std::abs(t);
  if (x == 0.0) return 1.0;
  // Split the range so the adaptive rule sees the peak near zero.
  double area = 0.0;
  double lo = 0.0;
  for (double hi : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0, 1e4, 1e6}) {
    const double h = std::min(hi, x);
    if (h > lo) area += integrate([df](double u) { return t_pdf(u, df); }, lo, h);
    lo = h;
    if (h >= x) break;
  }
  if (x > lo) area += integrate([df](double u) { return t_pdf(u, df); }, lo, x);
  const double p = 1.0 - 2.0 * area;
  return p < 0.0 ? 0.0 : p;
}

struct T {
  double t, df, p;
};

inline T welch(const std::vector<double>& a, const std::vector<double>& b) {
  const double va = sample_var(a) / static_cast<double>(a.size());
  const double vb = sample_var(b) / static_cast<double>(b.size());
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double df = (va + vb) * (va + vb) /
                    (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  return {t, df, two_sided_p(t, df)};
}

inline T paired(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) d.push_back(b[i] - a[i]);
  const double t = mean(d) / std::sqrt(sample_var(d) / static_cast<double>(d.size()));
  const double df = static_cast<double>(d.size() - 1);
  return {t, df, two_sided_p(t, df)};
}

}  // namespace oracle
