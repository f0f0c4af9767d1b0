#pragma once

#include <span>

namespace ctm {

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  double dof = 0.0;
};

/// Two-sided Welch's unequal-variance t-test. Both samples need at least two
/// values; throws InputError when both variances are zero.
TTestResult welch_ttest(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> x);
/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);

}  // namespace ctm
