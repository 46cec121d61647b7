#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bnnk::stats {

double mean(std::span<const double> xs);
/// Unbiased sample variance.
double variance(std::span<const double> xs);
double standard_error(std::span<const double> xs);
/// Sample excess kurtosis m4 / m2^2 - 3.
double excess_kurtosis(std::span<const double> xs);
double normal_cdf(double z);
/// Kolmogorov-Smirnov distance between the empirical CDF of `xs` and N(0, 1).
double ks_distance_normal(std::vector<double> xs);
/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::MatrixXd& symmetric);

}  // namespace bnnk::stats
