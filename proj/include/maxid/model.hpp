#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "maxid/measures.hpp"
#include "maxid/numerics.hpp"
#include "maxid/rng.hpp"

namespace maxid {

// Powered exponential correlation rho(h) = exp{-(h/lambda)^nu}.
struct CorrelationModel {
  double lambda = 1.0;
  double nu = 1.0;

  void validate() const;
  double operator()(double h) const;
};

class SiteConfig {
 public:
  SiteConfig(std::vector<std::string> ids, Eigen::MatrixX2d coords);

  static SiteConfig regular_grid(int per_side, double lo, double hi);
  static SiteConfig uniform_random(int n, RngStream& rng);

  int size() const { return static_cast<int>(coords_.rows()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixX2d& coords() const { return coords_; }
  double distance(int i, int j) const { return dist_(i, j); }
  const Eigen::MatrixXd& distances() const { return dist_; }

 private:
  std::vector<std::string> ids_;
  Eigen::MatrixX2d coords_;
  Eigen::MatrixXd dist_;
};

// Radial measure + Gaussian spectral correlation over a site set; everything
// needed to evaluate the exponent function and to simulate.
class MaxIdProcess {
 public:
  MaxIdProcess(RadialMeasure measure, CorrelationModel corr, SiteConfig sites);

  const RadialMeasure& measure() const { return measure_; }
  const CorrelationModel& corr_model() const { return corr_; }
  const SiteConfig& sites() const { return sites_; }
  const CorrelationMatrix& sigma() const { return sigma_; }
  const Eigen::MatrixXd& chol_lower() const { return chol_.lower; }
  double rho(int i, int j) const { return sigma_(i, j); }

 private:
  RadialMeasure measure_;
  CorrelationModel corr_;
  SiteConfig sites_;
  CorrelationMatrix sigma_;
  CholeskyResult chol_;
};

// ---------------------------------------------------------------------------
// Bivariate exponent-function kernel
// ---------------------------------------------------------------------------

struct BivDerivs {
  double v = 0.0;
  double v1 = 0.0;   // dV/dz1 (negative)
  double v2 = 0.0;   // dV/dz2 (negative)
  double v12 = 0.0;  // d2V/dz1 dz2 (negative)
};

// Evaluates V and its partial derivatives for one site pair in a single
// quadrature pass. Immutable; reusable across replicates with the same rho.
class BivariateKernel {
 public:
  BivariateKernel(RadialMeasure measure, double rho, QuadratureSpec spec = {});

  const RadialMeasure& measure() const { return measure_; }
  double rho() const { return rho_; }

  double v(double z1, double z2) const;
  BivDerivs v_all(double z1, double z2) const;

  // log[exp(-V) (V1 V2 - V12)]; throws NumericalDensityFailure when the
  // density factor is nonpositive beyond quadrature noise
  double loglik(double z1, double z2) const;

 private:
  RadialMeasure measure_;
  double rho_;
  QuadratureSpec spec_;
};

// ---------------------------------------------------------------------------
// Exponent function and marginal quantities
// ---------------------------------------------------------------------------

// V(z) at D = 1 (the marginal exponent function); depends on the measure only.
double marginal_V(const RadialMeasure& m, double z,
                  const QuadratureSpec& spec = {});

// z with Pr(Z_j <= z) = exp(-marginal_V(z)) = prob; 1e-8 relative.
double marginal_quantile(const RadialMeasure& m, double prob,
                         const QuadratureSpec& spec = {});

struct ExponentResult {
  double v = 0.0;
  double error_estimate = 0.0;  // carries the MVN noise at D > 2
};

// V(z) for arbitrary D <= 64; bivariate/univariate cases use closed kernels,
// larger D integrates the randomized-QMC Gaussian CDF.
ExponentResult exponent_V(const RadialMeasure& m, const CorrelationMatrix& cor,
                          const Eigen::VectorXd& z, const QuadratureSpec& spec,
                          RngStream& rng, double mvn_target = 2e-4);

ExponentResult exponent_V(const MaxIdProcess& p, const Eigen::VectorXd& z,
                          const QuadratureSpec& spec, RngStream& rng,
                          double mvn_target = 2e-4);

// ---------------------------------------------------------------------------
// Dependence summaries
// ---------------------------------------------------------------------------

struct DependenceSummary {
  double z = 0.0;
  double theta = 0.0;
  double chi_exact = 0.0;
  double chi_proxy = 0.0;
};

// Level-dependent extremal coefficient theta_{|subset|}(z), standardized
// through the model margin: solves marginal_V(z*) = 1/z and returns
// z * V(z*, ..., z*) over the subset.
double theta_level(const MaxIdProcess& p, const std::vector<int>& subset,
                   double z, RngStream& rng, const QuadratureSpec& spec = {},
                   double mvn_target = 2e-4);

// chi(z) for a site pair: exact conditional exceedance probability plus the
// asymptotic proxy 2 - theta_2(z).
DependenceSummary chi_level(const MaxIdProcess& p, int site1, int site2,
                            double z, const QuadratureSpec& spec = {});

// Closed-form coefficient of tail dependence eta(h) = {(1+rho)/2}^{b/(b+2)}.
double eta_coefficient(const CorrelationModel& cm, double beta, double h);

struct ExceedProbResult {
  double prob = 0.0;
  double level = 0.0;  // the marginal quantile z
  double error_estimate = 0.0;
};

// p(z) = 1 - Pr(Z(s_1) <= z, ..., Z(s_D) <= z) with z the prob_level
// marginal quantile, evaluated on `grid`.
ExceedProbResult joint_exceed_prob(const RadialMeasure& m,
                                   const CorrelationModel& cm,
                                   const SiteConfig& grid, double prob_level,
                                   RngStream& rng,
                                   const QuadratureSpec& spec = {},
                                   double mvn_target = 2e-4);

// ---------------------------------------------------------------------------
// Finite exponent measure model
// ---------------------------------------------------------------------------

MvnResult finite_model_cdf(const FiniteMeasureSpec& spec,
                           const Eigen::VectorXd& z, double target_err,
                           RngStream& rng);

double finite_model_bivariate_loglik(const FiniteMeasureSpec& spec, double z1,
                                     double z2);

}  // namespace maxid
