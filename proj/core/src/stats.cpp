#include "dmn/stats.hpp"

#include <algorithm>
#include <cmath>

namespace dmn {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("mean_of: empty sample");
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("stddev_of: empty sample");
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double percentile_of(std::vector<double> v, double p) {
  if (v.empty()) throw InvalidArgument("percentile_of: empty sample");
  if (p < 0.0 || p > 100.0)
    throw InvalidArgument("percentile_of: p must lie in [0, 100]");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

namespace {

// Continued-fraction evaluation (modified Lentz) of the incomplete beta.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14, kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0)
    throw InvalidArgument("incomplete_beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  if (dof <= 0.0) throw InvalidArgument("student_t_cdf: dof must be > 0");
  const double x = dof / (dof + t * t);
  const double half_tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x);
  return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

double paired_t_pvalue_greater(const std::vector<double>& diff) {
  if (diff.size() < 2)
    throw InvalidArgument("paired_t_pvalue_greater: need >= 2 pairs");
  const double n = static_cast<double>(diff.size());
  const double m = mean_of(diff);
  const double sd = stddev_of(diff);
  if (sd == 0.0) return m > 0.0 ? 0.0 : 1.0;
  const double t = m / (sd / std::sqrt(n));
  return 1.0 - student_t_cdf(t, n - 1.0);
}

}  // namespace dmn
