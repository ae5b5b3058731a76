#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "maxid/errors.hpp"
#include "maxid/rng.hpp"

namespace maxid {

struct QuadratureSpec {
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  int max_subdivisions = 2000;
};

// ---------------------------------------------------------------------------
// Gaussian and chi distributions
// ---------------------------------------------------------------------------

double std_normal_cdf(double x);
double std_normal_sf(double x);
double std_normal_pdf(double x);

// Wichura's AS241 inverse normal, ~1e-15 absolute accuracy.
double std_normal_quantile(double p);

// P(X1 <= x1, X2 <= x2) for standard bivariate normal with correlation rho.
double bivariate_normal_cdf(double x1, double x2, double rho);

// log density of the standard bivariate normal
double bivariate_normal_logpdf(double x1, double x2, double rho);

// P(X1 <= x1, X2 <= x2, X3 <= x3); deterministic 1-D reduction through the
// conditional bivariate CDF (constant conditional correlation).
double trivariate_normal_cdf(double x1, double x2, double x3, double r12,
                             double r13, double r23);

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chi_cdf(double r, int dof);
double chi_sf(double r, int dof);

// Student-t CDF with real dof (used by extremal-t closed forms).
double student_t_cdf(double x, double dof);

// ---------------------------------------------------------------------------
// Correlation matrices
// ---------------------------------------------------------------------------

struct CholeskyResult {
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // diagonal shift that was required
};

class CorrelationMatrix {
 public:
  explicit CorrelationMatrix(Eigen::MatrixXd m);

  int dimension() const { return static_cast<int>(mat_.rows()); }
  const Eigen::MatrixXd& matrix() const { return mat_; }
  double operator()(int i, int j) const { return mat_(i, j); }

 private:
  Eigen::MatrixXd mat_;
};

// LL^T = corr + jitter*I; ladder 1e-12 .. 1e-6, then NotPositiveSemidefinite.
CholeskyResult cholesky_with_jitter(const CorrelationMatrix& corr);
CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& sym);

// ---------------------------------------------------------------------------
// Quadrature on (0, infinity)
// ---------------------------------------------------------------------------

// Adaptive Gauss-Kronrod on the log axis t = log r. The integrand may have
// power-law behavior near 0 and super-exponentially decaying tails.
double integrate_semiinfinite(const std::function<double(double)>& f,
                              const QuadratureSpec& spec);

// Vector-valued variant sharing one subdivision; component k of the result
// integrates f(r)[k] dr. Component 0 drives the bracketing scan, error
// control is per component.
using MultiIntegrand = std::function<void(double /*r*/, double* /*out*/)>;
std::vector<double> integrate_semiinfinite_multi(const MultiIntegrand& f,
                                                 int n_components,
                                                 const QuadratureSpec& spec);

// ---------------------------------------------------------------------------
// Multivariate normal CDF (randomized QMC, Genz separation of variables)
// ---------------------------------------------------------------------------

struct MvnResult {
  double prob = 0.0;
  double error_estimate = 0.0;  // ~99% bound
};

inline constexpr int kMaxMvnDim = 64;

MvnResult mvn_cdf(const Eigen::VectorXd& upper, const CorrelationMatrix& corr,
                  double target_err, RngStream& rng);

// ---------------------------------------------------------------------------
// Sphere sampling
// ---------------------------------------------------------------------------

Eigen::VectorXd sample_unit_sphere(int dim, RngStream& rng);

}  // namespace maxid
