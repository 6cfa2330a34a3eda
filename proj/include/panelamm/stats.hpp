#pragma once

#include <Eigen/Dense>

#include <string>

namespace panelamm {

// Upper tail P(X >= x) of a chi-square variable with df degrees of freedom.
double chi_square_sf(double x, double df);

double normal_cdf(double x);
double normal_quantile(double p);

double median(Eigen::VectorXd values);

// Median of values repeated weights(i) times (weights >= 0, not all zero).
// For integer weights this is the ordinary median of the expanded sample.
double weighted_median(const Eigen::VectorXd& values, const Eigen::VectorXd& weights);

// "***", "**", "*", "." or "" at 0.001 / 0.01 / 0.05 / 0.1.
std::string significance_code(double p);

}  // namespace panelamm
