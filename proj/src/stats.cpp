#include "ctm/stats.hpp"

#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "ctm/error.hpp"

namespace ctm {
namespace {

double sample_variance(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  return std::sqrt(sample_variance(x, mean(x)));
}

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("welch_ttest: each sample needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double sa = sample_variance(a, ma) / na;
  const double sb = sample_variance(b, mb) / nb;
  const double se2 = sa + sb;
  if (!(se2 > 0.0)) throw InputError("welch_ttest: both samples have zero variance");

  TTestResult r;
  r.t_statistic = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  const boost::math::students_t dist(r.dof);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic)));
  if (r.p_value > 1.0) r.p_value = 1.0;
  return r;
}

}  // namespace ctm
