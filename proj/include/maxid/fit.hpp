#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxid/model.hpp"
#include "maxid/optim.hpp"

namespace maxid {

// psi with per-component fixed/free flags. Optimizer coordinates are the
// unconstrained transforms of the free components:
//   lambda, beta -> log; nu -> logit(nu/2); M1 alpha -> logit(alpha);
//   M2 alpha -> log.
struct ParamVector {
  MeasureFamily family = MeasureFamily::M3;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda = 0.5;
  double nu = 1.0;
  bool alpha_free = false;
  bool beta_free = true;
  bool lambda_free = true;
  bool nu_free = false;

  void validate() const;
  RadialMeasure measure() const;
  CorrelationModel corr() const;

  int n_free() const;
  std::vector<std::string> free_names() const;
  Eigen::VectorXd pack() const;             // transformed free coordinates
  void unpack(const Eigen::VectorXd& t);    // inverse of pack
  // d(natural)/d(transformed) for each free coordinate, at the current point
  Eigen::VectorXd transform_jacobian() const;
};

// Binary distance-cutoff weights: omega = 1 iff dist < delta.
class PairWeights {
 public:
  PairWeights(const SiteConfig& sites, double cutoff);

  double cutoff() const { return cutoff_; }
  const std::vector<std::pair<int, int>>& active() const { return active_; }
  int n_active() const { return static_cast<int>(active_.size()); }
  double weight_sum() const { return static_cast<double>(active_.size()); }

 private:
  double cutoff_;
  std::vector<std::pair<int, int>> active_;
};

struct FitConfig {
  double cutoff = 0.5;
  double beta_init = 0.5;
  QuadratureSpec quad{1e-7, 1e-11, 600};
  NelderMeadOptions nm{1e-6, 2000, 2, 0.4};
  bool multistart = true;
  bool compute_godambe = true;
};

struct GodambeResult {
  Eigen::MatrixXd J;  // per-replicate expected information estimate
  Eigen::MatrixXd K;  // per-replicate score covariance
  std::vector<double> std_errors;  // natural scale, sqrt(diag(J^-1 K J^-1)/n)
  bool beta_boundary = false;
};

struct FitResult {
  ParamVector psi;
  double pl_value = 0.0;  // maximized pairwise log-likelihood
  Eigen::MatrixXd J_hat;
  Eigen::MatrixXd K_hat;
  std::vector<double> std_errors;
  double clic_star = 0.0;
  bool converged = false;
  bool beta_boundary = false;
  long n_function_evals = 0;
};

// Negative pairwise log-likelihood: sum over active pairs and replicates of
// -loglik. Returns +inf (with a diagnostic, if requested) when a pair term
// fails instead of throwing, so the optimizer can route around bad regions.
double pairwise_nll(const ParamVector& psi, const Eigen::MatrixXd& data,
                    const SiteConfig& sites, const PairWeights& weights,
                    const QuadratureSpec& spec = {},
                    std::string* diagnostic = nullptr);

// Per-replicate pairwise log-likelihood vector (sums to -pairwise_nll);
// throws NumericalDensityFailure with pair/replicate indices on failure.
Eigen::VectorXd pairwise_loglik_by_replicate(const ParamVector& psi,
                                             const Eigen::MatrixXd& data,
                                             const SiteConfig& sites,
                                             const PairWeights& weights,
                                             const QuadratureSpec& spec = {});

// Dual maximization: (beta free, beta = 0 fixed). `tmpl` fixes the family,
// the free flags, and the starting values for everything except lambda,
// which is seeded from the data unless multistart is disabled.
std::pair<FitResult, FitResult> fit_pairwise(const Eigen::MatrixXd& data,
                                             const SiteConfig& sites,
                                             const ParamVector& tmpl,
                                             const FitConfig& config = {});

// Single maximization of the pairwise likelihood for one ParamVector
// template (free flags respected as-is).
FitResult fit_pairwise_single(const Eigen::MatrixXd& data,
                              const SiteConfig& sites, const ParamVector& tmpl,
                              const FitConfig& config = {});

GodambeResult godambe(const ParamVector& psi_hat, const Eigen::MatrixXd& data,
                      const SiteConfig& sites, const PairWeights& weights,
                      const QuadratureSpec& spec = {});

// CLIC* = -2 pl / C + 2 tr(J^-1 K) / C with C = (2/D) * sum of weights.
double clic_star(double pl_value, const Eigen::MatrixXd& J,
                 const Eigen::MatrixXd& K, const PairWeights& weights, int D);

// Full negative log-likelihood by set-partition enumeration, D <= 5.
// Exponent-function partial derivatives come from nested central finite
// differences of V; testing oracle only, not for production fitting.
double full_nll_oracle(const ParamVector& psi, const Eigen::MatrixXd& data,
                       const SiteConfig& sites,
                       const QuadratureSpec& spec = {},
                       double fd_step_rel = 2e-3);

}  // namespace maxid
