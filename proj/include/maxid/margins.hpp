#pragma once

#include <Eigen/Dense>
#include <vector>

#include "maxid/errors.hpp"

namespace maxid {

// Per-site GEV margin with extremal index theta for block-size rescaling.
struct GevMargin {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
  double theta = 1.0;

  void validate() const;
};

// beta for the Gumbel branch switch
inline constexpr double kGevXiZeroTol = 1e-8;

struct BlockSpec {
  std::vector<std::string> labels;
  std::vector<double> sizes;  // strictly increasing, first = 1

  static BlockSpec standard();  // daily/weekly/monthly/yearly = 1/7/30/182
  void validate() const;
};

double gev_cdf(const GevMargin& m, double z);
double gev_quantile(const GevMargin& m, double p);
double gev_logpdf(const GevMargin& m, double z);

// Margin of the maximum over an effective block of size m = b_k * theta:
// G' = G^m pointwise, achieved by xi-preserving location/scale update.
GevMargin rescale_gev(const GevMargin& m, double block_factor);

// Unit-Frechet transform through the scale-k margin: exp(-1/u) = G_k(z).
double to_frechet(double z, const GevMargin& m, double block_factor);
double from_frechet(double u, const GevMargin& m, double block_factor);

struct GevFitResult {
  GevMargin margin;
  bool converged = false;
  bool theta_identifiable = true;  // false when only one scale is supplied
  double loglik = 0.0;
  int n_evals = 0;
};

// Joint fit across time scales with shared (mu, sigma, xi, theta) and
// per-scale rescaling by sizes[k] * theta. series[k] are the maxima at
// scale k (may be empty for k > 0).
GevFitResult fit_gev_joint(const std::vector<std::vector<double>>& series,
                           const BlockSpec& blocks);

// Rank transform to the unit-Frechet scale: u = -1 / log(rank/(n+1)),
// average ranks for ties.
Eigen::MatrixXd empirical_to_frechet(const Eigen::MatrixXd& data);

}  // namespace maxid
