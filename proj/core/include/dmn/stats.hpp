#pragma once

#include <vector>

#include "dmn/common.hpp"

namespace dmn {

double mean_of(const std::vector<double>& v);
// Sample standard deviation (n - 1 denominator; 0 for n < 2).
double stddev_of(const std::vector<double>& v);
// Linear-interpolation percentile, p in [0, 100].
double percentile_of(std::vector<double> v, double p);

// Regularized incomplete beta function I_x(a, b) (continued fraction).
double incomplete_beta(double a, double b, double x);
// CDF of Student's t distribution with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);
// One-sided p-value for H1: mean(diff) > 0, paired t-test on the differences.
double paired_t_pvalue_greater(const std::vector<double>& diff);

}  // namespace dmn
