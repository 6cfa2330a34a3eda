#include "panelamm/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "panelamm/errors.hpp"

namespace panelamm {

double chi_square_sf(double x, double df) {
  if (!(df > 0)) throw DomainError("chi-square df must be positive");
  if (!(x > 0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

double normal_cdf(double x) { return boost::math::cdf(boost::math::normal(), x); }

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

double median(Eigen::VectorXd values) {
  const Eigen::Index n = values.size();
  if (n == 0) throw LengthError("median of an empty vector");
  double* d = values.data();
  std::nth_element(d, d + n / 2, d + n);
  const double hi = d[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(d, d + n / 2);
  return 0.5 * (lo + hi);
}

double weighted_median(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  if (values.size() != weights.size()) throw DimensionError("values and weights differ in length");
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (weights(i) > 0) idx.push_back(i);
  if (idx.empty()) throw PreconditionError("median of an empty weighted sample");
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  double total = 0.0;
  for (Eigen::Index i : idx) total += weights(i);
  const double half = 0.5 * total;
  double cum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    cum += weights(idx[k]);
    if (cum > half * (1 + 1e-14)) return values(idx[k]);
    if (cum >= half * (1 - 1e-14)) return 0.5 * (values(idx[k]) + values(idx[std::min(k + 1, idx.size() - 1)]));
  }
  return values(idx.back());
}

std::string significance_code(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return ".";
  return "";
}

}  // namespace panelamm
