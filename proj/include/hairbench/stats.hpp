#pragma once

// Paired two-sample comparison: Shapiro-Wilk normality gate on the per-image
// differences, then a paired t-test or a Wilcoxon signed-rank test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "hairbench/error.hpp"

namespace hairbench {

struct ShapiroWilkResult {
  double w;
  double p;
};

namespace stats_detail {

inline double poly(const double* c, int n, double x) {
  double r = c[n - 1];
  for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
  return r;
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_upper(double z, double mean = 0.0, double sd = 1.0) {
  return boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(mean, sd), z));
}

}  // namespace stats_detail

/// Royston's (1995) algorithm AS R94 for 3 <= n <= 5000.
inline ShapiroWilkResult shapiro_wilk(std::vector<double> x) {
  using stats_detail::poly;
  const std::size_t n = x.size();
  if (n < 3 || n > 5000) throw ContractViolation("shapiro_wilk: need 3 <= n <= 5000, got " + std::to_string(n));
  std::sort(x.begin(), x.end());
  const double range = x.back() - x.front();
  if (!(range > 1e-19 * std::max(1.0, std::abs(x.front())))) {
    throw DegenerateSample("shapiro_wilk: all values are identical");
  }

  static const double g[2] = {-2.273, 0.459};
  static const double c1[6] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
  static const double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
  static const double c3[4] = {0.544, -0.39978, 0.025054, -6.714e-4};
  static const double c4[4] = {1.3822, -0.77857, 0.062767, -0.0020322};
  static const double c5[4] = {-1.5861, -0.31082, -0.083751, 0.0038915};
  static const double c6[3] = {-0.4803, -0.082676, 0.0030302};

  const double an = static_cast<double>(n);
  const std::size_t half = n / 2;
  std::vector<double> a(half);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = stats_detail::normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, 6, rsn) - m[0] / ssumm2;
    std::size_t first = 1;
    double fac;
    if (n > 5) {
      first = 2;
      const double a2 = -m[1] / ssumm2 + poly(c2, 6, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[1] = a2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
    }
    a[0] = a1;
    for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
  }

  // W as the squared correlation between the ordered sample and the
  // antisymmetric coefficient vector (a[i] weights the i-th largest value).
  std::vector<double> coef(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    coef[i] = -a[i];
    coef[n - 1 - i] = a[i];
  }
  double mean = 0.0;
  for (double v : x) mean += v / range;
  mean /= an;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xs = x[i] / range - mean;
    ssa += coef[i] * coef[i];
    ssx += xs * xs;
    sax += coef[i] * xs;
  }
  const double ssassx = std::sqrt(ssa * ssx);
  const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
  const double w = 1.0 - w1;

  if (n == 3) {
    constexpr double pi6 = 1.90985931710274;   // 6 / pi
    constexpr double stqr = 1.04719755119660;  // asin(sqrt(3/4))
    const double p = pi6 * (std::asin(std::sqrt(std::clamp(w, 0.0, 1.0))) - stqr);
    return {w, std::clamp(p, 0.0, 1.0)};
  }
  double y = std::log(w1);
  const double lan = std::log(an);
  double mu, sd;
  if (n <= 11) {
    const double gamma = poly(g, 2, an);
    if (y >= gamma) return {w, 1e-99};
    y = -std::log(gamma - y);
    mu = poly(c3, 4, an);
    sd = std::exp(poly(c4, 4, an));
  } else {
    mu = poly(c5, 4, lan);
    sd = std::exp(poly(c6, 3, lan));
  }
  return {w, std::clamp(stats_detail::normal_upper(y, mu, sd), 0.0, 1.0)};
}

struct TTestResult {
  double t;
  double p;
};

/// Two-sided paired t-test on d = a - b.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractViolation("paired_t_test: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw ContractViolation("paired_t_test: need at least 2 pairs");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegenerateSample("paired_t_test: differences have zero variance");
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, std::clamp(p, 0.0, 1.0)};
}

struct WilcoxonResult {
  double w_plus;   // sum of ranks of positive differences
  double w_minus;  // sum of ranks of negative differences
  std::size_t n;   // nonzero differences
  double p;
  bool exact;
};

/// Average ranks (1-based) of |d| and the tie-group sizes.
inline std::vector<double> average_ranks(const std::vector<double>& v, std::vector<std::size_t>* ties = nullptr) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    if (ties) ties->push_back(j - i + 1);
    i = j + 1;
  }
  return ranks;
}

inline constexpr std::size_t kWilcoxonExactMax = 25;

namespace stats_detail {

struct SignedRanks {
  std::vector<double> ranks;
  std::vector<bool> positive;
  std::vector<std::size_t> ties;
  double w_plus = 0.0;
  double w_minus = 0.0;
};

inline SignedRanks signed_ranks(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractViolation("wilcoxon: length mismatch");
  std::vector<double> mag;
  SignedRanks s;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d == 0.0) continue;  // zero-drop convention
    mag.push_back(std::abs(d));
    s.positive.push_back(d > 0.0);
  }
  if (mag.empty()) throw DegenerateSample("wilcoxon: all differences are zero");
  s.ranks = average_ranks(mag, &s.ties);
  for (std::size_t i = 0; i < mag.size(); ++i) (s.positive[i] ? s.w_plus : s.w_minus) += s.ranks[i];
  return s;
}

}  // namespace stats_detail

/// Exact two-sided p: the null distribution of W+ over all 2^n sign patterns,
/// tallied on doubled ranks so average ranks stay integral.
inline double wilcoxon_exact_p(const std::vector<double>& ranks, double w_plus) {
  std::vector<long> doubled(ranks.size());
  long total = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    doubled[i] = std::lround(2.0 * ranks[i]);
    total += doubled[i];
  }
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  long reach = 0;
  for (long r : doubled) {
    for (long s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
    reach += r;
  }
  const long obs = std::lround(2.0 * w_plus);
  double lower = 0.0, upper = 0.0;
  for (long s = 0; s <= total; ++s) {
    if (s <= obs) lower += count[static_cast<std::size_t>(s)];
    if (s >= obs) upper += count[static_cast<std::size_t>(s)];
  }
  const double patterns = std::ldexp(1.0, static_cast<int>(ranks.size()));
  return std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
}

/// Normal approximation with tie and continuity corrections.
inline double wilcoxon_normal_p(std::size_t n, double w_plus, const std::vector<std::size_t>& ties) {
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  for (std::size_t t : ties) {
    const double tt = static_cast<double>(t);
    var -= (tt * tt * tt - tt) / 48.0;
  }
  if (!(var > 0.0)) return 1.0;
  double d = w_plus - mean;
  if (d != 0.0) d -= 0.5 * (d > 0 ? 1.0 : -1.0);
  const double z = std::abs(d) / std::sqrt(var);
  return std::clamp(2.0 * stats_detail::normal_upper(z), 0.0, 1.0);
}

/// Two-sided Wilcoxon signed-rank test on d = a - b with zero differences dropped.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  const auto s = stats_detail::signed_ranks(a, b);
  const std::size_t n = s.ranks.size();
  WilcoxonResult r{s.w_plus, s.w_minus, n, 1.0, n <= kWilcoxonExactMax};
  r.p = r.exact ? wilcoxon_exact_p(s.ranks, s.w_plus) : wilcoxon_normal_p(n, s.w_plus, s.ties);
  return r;
}

enum class TestKind { None, PairedT, Wilcoxon };

inline const char* test_name(TestKind t) {
  switch (t) {
    case TestKind::PairedT: return "t";
    case TestKind::Wilcoxon: return "wilcoxon";
    case TestKind::None: return "none";
  }
  return "none";
}

/// ✓✓ / ✗✗: significant at alpha; ✓ / ✗: not significant. The check side
/// means method A's mean is better under the metric's orientation.
enum class Classification { SignificantlyBetter, Better, Worse, SignificantlyWorse, Incomparable };

inline const char* classification_glyph(Classification c) {
  switch (c) {
    case Classification::SignificantlyBetter: return "✓✓";
    case Classification::Better: return "✓";
    case Classification::Worse: return "✗";
    case Classification::SignificantlyWorse: return "✗✗";
    case Classification::Incomparable: return "incomparable";
  }
  return "incomparable";
}

inline Classification mirrored(Classification c) {
  switch (c) {
    case Classification::SignificantlyBetter: return Classification::SignificantlyWorse;
    case Classification::Better: return Classification::Worse;
    case Classification::Worse: return Classification::Better;
    case Classification::SignificantlyWorse: return Classification::SignificantlyBetter;
    case Classification::Incomparable: return Classification::Incomparable;
  }
  return c;
}

struct PairedSampleSet {
  std::string method_a;
  std::string method_b;
  std::string metric;
  std::vector<double> a;
  std::vector<double> b;
  bool lower_is_better = false;
};

struct Verdict {
  TestKind test = TestKind::None;
  double p = 1.0;
  double shapiro_p = 0.0;  // normality p of the differences; 0 when degenerate
  Classification classification = Classification::Incomparable;
  std::string note;
};

inline Classification classify(double p, double mean_difference, bool lower_is_better, double alpha = 0.05) {
  if (mean_difference == 0.0 || !std::isfinite(mean_difference)) return Classification::Incomparable;
  const bool a_better = lower_is_better ? mean_difference < 0.0 : mean_difference > 0.0;
  const bool significant = p < alpha;
  if (a_better) return significant ? Classification::SignificantlyBetter : Classification::Better;
  return significant ? Classification::SignificantlyWorse : Classification::Worse;
}

/// Verdict for one (method pair, metric) cell.
inline Verdict compare_pair(const PairedSampleSet& s, double alpha = 0.05) {
  if (s.a.size() != s.b.size()) throw ContractViolation("compare: vectors for " + s.metric + " differ in length");
  if (s.a.size() < 3) throw ContractViolation("compare: need at least 3 paired values for " + s.metric);
  std::vector<double> d(s.a.size());
  double sum = 0.0;
  bool any_nonzero = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = s.a[i] - s.b[i];
    sum += d[i];
    any_nonzero = any_nonzero || d[i] != 0.0;
  }
  Verdict v;
  if (!any_nonzero) {
    v.note = "all differences zero";
    return v;
  }
  const double mean = sum / static_cast<double>(d.size());
  // Test the canonically signed differences so swapping A and B cannot change
  // the normality decision through rounding.
  if (mean < 0.0) {
    for (auto& x : d) x = -x;
  }
  bool normal = false;
  try {
    v.shapiro_p = shapiro_wilk(d).p;
    normal = v.shapiro_p > alpha;
  } catch (const DegenerateSample&) {
    v.shapiro_p = 0.0;
  }
  if (normal) {
    v.test = TestKind::PairedT;
    v.p = paired_t_test(d, std::vector<double>(d.size(), 0.0)).p;
  } else {
    v.test = TestKind::Wilcoxon;
    v.p = wilcoxon_signed_rank(d, std::vector<double>(d.size(), 0.0)).p;
  }
  v.classification = classify(v.p, mean, s.lower_is_better, alpha);
  if (v.classification == Classification::Incomparable) v.note = "zero mean difference";
  return v;
}

inline std::vector<Verdict> compare_methods(const std::vector<PairedSampleSet>& sets, double alpha = 0.05) {
  std::vector<Verdict> out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(compare_pair(s, alpha));
  return out;
}

}  // namespace hairbench
