#include "maxid/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maxid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Correlation model / sites / process
// ---------------------------------------------------------------------------

void CorrelationModel::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw InvalidParameters("correlation range lambda must be > 0");
  }
  if (!(nu > 0.0 && nu <= 2.0)) {
    throw InvalidParameters("correlation smoothness nu must be in (0,2]");
  }
}

double CorrelationModel::operator()(double h) const {
  validate();
  if (h < 0.0) throw InvalidParameters("distance must be >= 0");
  if (h == 0.0) return 1.0;
  return std::exp(-std::pow(h / lambda, nu));
}

SiteConfig::SiteConfig(std::vector<std::string> ids, Eigen::MatrixX2d coords)
    : ids_(std::move(ids)), coords_(std::move(coords)) {
  const int n = static_cast<int>(coords_.rows());
  if (ids_.empty()) {
    for (int i = 0; i < n; ++i) ids_.push_back("s" + std::to_string(i + 1));
  }
  if (static_cast<int>(ids_.size()) != n) {
    throw InvalidParameters("site ids/coords length mismatch");
  }
  dist_.resize(n, n);
  for (int i = 0; i < n; ++i) {
    dist_(i, i) = 0.0;
    for (int j = 0; j < i; ++j) {
      const double d = (coords_.row(i) - coords_.row(j)).norm();
      dist_(i, j) = d;
      dist_(j, i) = d;
    }
  }
}

SiteConfig SiteConfig::regular_grid(int per_side, double lo, double hi) {
  Eigen::MatrixX2d coords(per_side * per_side, 2);
  int k = 0;
  for (int i = 0; i < per_side; ++i) {
    for (int j = 0; j < per_side; ++j, ++k) {
      coords(k, 0) = lo + (hi - lo) * i / (per_side - 1);
      coords(k, 1) = lo + (hi - lo) * j / (per_side - 1);
    }
  }
  return SiteConfig({}, coords);
}

SiteConfig SiteConfig::uniform_random(int n, RngStream& rng) {
  Eigen::MatrixX2d coords(n, 2);
  for (int i = 0; i < n; ++i) {
    coords(i, 0) = rng.uniform();
    coords(i, 1) = rng.uniform();
  }
  return SiteConfig({}, coords);
}

namespace {

CorrelationMatrix build_sigma(const CorrelationModel& cm,
                              const SiteConfig& sites) {
  const int n = sites.size();
  Eigen::MatrixXd s(n, n);
  for (int i = 0; i < n; ++i) {
    s(i, i) = 1.0;
    for (int j = 0; j < i; ++j) {
      const double r = cm(sites.distance(i, j));
      s(i, j) = r;
      s(j, i) = r;
    }
  }
  return CorrelationMatrix(s);
}

}  // namespace

MaxIdProcess::MaxIdProcess(RadialMeasure measure, CorrelationModel corr,
                           SiteConfig sites)
    : measure_(std::move(measure)),
      corr_(corr),
      sites_(std::move(sites)),
      sigma_(build_sigma(corr, sites_)),
      chol_(cholesky_with_jitter(sigma_)) {}

// ---------------------------------------------------------------------------
// Bivariate kernel
// ---------------------------------------------------------------------------

BivariateKernel::BivariateKernel(RadialMeasure measure, double rho,
                                 QuadratureSpec spec)
    : measure_(std::move(measure)), rho_(rho), spec_(spec) {
  if (std::abs(rho_) > 1.0) throw InvalidParameters("|rho| must be <= 1");
}

double BivariateKernel::v(double z1, double z2) const {
  if (!(z1 > 0.0 && z2 > 0.0)) throw InvalidParameters("z must be > 0");
  auto f = [&](double r) {
    return (1.0 - bivariate_normal_cdf(z1 / r, z2 / r, rho_)) *
           measure_.intensity(r);
  };
  return integrate_semiinfinite(f, spec_);
}

BivDerivs BivariateKernel::v_all(double z1, double z2) const {
  if (!(z1 > 0.0 && z2 > 0.0)) throw InvalidParameters("z must be > 0");
  const double s = std::sqrt(std::max(0.0, (1.0 - rho_) * (1.0 + rho_)));
  MultiIntegrand f = [&](double r, double* out) {
    const double x1 = z1 / r;
    const double x2 = z2 / r;
    const double fi = measure_.intensity(r);
    out[0] = (1.0 - bivariate_normal_cdf(x1, x2, rho_)) * fi;
    double c1, c2;  // conditional normal CDFs
    if (s > 0.0) {
      c1 = std_normal_cdf((x2 - rho_ * x1) / s);
      c2 = std_normal_cdf((x1 - rho_ * x2) / s);
    } else {
      c1 = (x2 > x1) ? 1.0 : ((x2 < x1) ? 0.0 : 0.5);
      c2 = (x1 > x2) ? 1.0 : ((x1 < x2) ? 0.0 : 0.5);
    }
    out[1] = c1 * std_normal_pdf(x1) * fi / r;
    out[2] = c2 * std_normal_pdf(x2) * fi / r;
    out[3] = (s > 0.0)
                 ? std::exp(bivariate_normal_logpdf(x1, x2, rho_)) * fi / (r * r)
                 : 0.0;
  };
  const auto vals = integrate_semiinfinite_multi(f, 4, spec_);
  return {vals[0], -vals[1], -vals[2], -vals[3]};
}

double BivariateKernel::loglik(double z1, double z2) const {
  const BivDerivs d = v_all(z1, z2);
  double factor = d.v1 * d.v2 - d.v12;
  if (factor <= 0.0) {
    if (factor > -1e-12) {
      factor = 1e-300;  // quadrature noise at extreme inputs
    } else {
      throw NumericalDensityFailure("bivariate density factor nonpositive");
    }
  }
  return -d.v + std::log(factor);
}

// ---------------------------------------------------------------------------
// Marginal exponent function and quantile
// ---------------------------------------------------------------------------

double marginal_V(const RadialMeasure& m, double z, const QuadratureSpec& spec) {
  if (!(z > 0.0)) throw InvalidParameters("marginal_V requires z > 0");
  auto f = [&](double r) {
    return std_normal_sf(z / r) * m.intensity(r);
  };
  return integrate_semiinfinite(f, spec);
}

double marginal_quantile(const RadialMeasure& m, double prob,
                         const QuadratureSpec& spec) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw InvalidParameters("marginal_quantile requires prob in (0,1)");
  }
  const double target = -std::log(prob);  // V(z) = target, V decreasing
  double lo = 1.0, hi = 1.0;
  if (marginal_V(m, 1.0, spec) > target) {
    while (marginal_V(m, hi, spec) > target) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e12) throw NonConvergence("marginal_quantile bracket");
    }
  } else {
    while (marginal_V(m, lo, spec) < target) {
      hi = lo;
      lo *= 0.5;
      if (lo < 1e-12) throw NonConvergence("marginal_quantile bracket");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (marginal_V(m, mid, spec) > target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-9 * lo) break;
  }
  return std::sqrt(lo * hi);
}

// ---------------------------------------------------------------------------
// D-variate exponent function
// ---------------------------------------------------------------------------

ExponentResult exponent_V(const RadialMeasure& m, const CorrelationMatrix& cor,
                          const Eigen::VectorXd& z, const QuadratureSpec& spec,
                          RngStream& rng, double mvn_target) {
  const int d = static_cast<int>(z.size());
  if (d != cor.dimension()) throw InvalidParameters("exponent_V size mismatch");
  if (d > kMaxMvnDim) throw DimensionTooLarge("exponent_V supports D <= 64");
  for (int i = 0; i < d; ++i) {
    if (!(z[i] > 0.0)) throw InvalidParameters("exponent_V requires z > 0");
  }
  if (d == 1) return {marginal_V(m, z[0], spec), 0.0};
  if (d == 2) {
    BivariateKernel k(m, cor(0, 1), spec);
    return {k.v(z[0], z[1]), 0.0};
  }

  auto integrand = [&](double r, const RngStream& base) {
    const Eigen::VectorXd b = z / r;
    // union bound on the complement; below ~1e-9 the QMC CDF has no
    // relative accuracy left (1 - prob cancels to noise) and the bound
    // itself is the better estimate
    double ub = 0.0;
    for (int i = 0; i < d; ++i) ub += std_normal_sf(b[i]);
    if (ub < 1e-9) return ub * m.intensity(r);
    RngStream s = base;  // identical shifts for every r
    return (1.0 - mvn_cdf(b, cor, mvn_target, s).prob) * m.intensity(r);
  };

  if (d <= 5) {
    // cheap CDF evaluations: adaptive quadrature with one fixed set of QMC
    // shifts per pass, so each pass sees a smooth deterministic function
    QuadratureSpec vspec = spec;
    vspec.rel_tol = std::max(spec.rel_tol, 1e-5);
    vspec.abs_tol = std::max(spec.abs_tol, 1e-10);
    auto one_pass = [&](RngStream base) {
      auto f = [&](double r) { return integrand(r, base); };
      return integrate_semiinfinite(f, vspec);
    };
    const double va = one_pass(rng.child(1));
    const double vb = one_pass(rng.child(2));
    return {0.5 * (va + vb), 0.5 * std::abs(va - vb) + mvn_target};
  }

  // Large D: each CDF evaluation is expensive, so spend a bounded number of
  // nodes. Bracket the radial range explicitly, then apply composite
  // Gauss-Legendre in log r (the integrand is smooth and unimodal there).
  const double z_min = z.minCoeff();
  const double v_low = std::max(marginal_V(m, z_min, spec), 1e-12);
  // below r_lo every site's exceedance chance is negligible
  double r_lo = z_min;
  while (r_lo > 1e-8 * z_min) {
    double ub = 0.0;
    for (int i = 0; i < d; ++i) ub += std_normal_sf(z[i] / r_lo);
    if (ub < 1e-11 * v_low) break;
    r_lo *= 0.75;
  }
  // above r_hi the remainder is bounded by the measure's tail mass
  double r_hi = z_min;
  while (m.tail_mass(r_hi) > 1e-7 * v_low && r_hi < 1e12 * z_min) {
    r_hi *= 1.6;
  }
  const double tail_bound = m.tail_mass(r_hi);

  static const double kGlNode[8] = {
      0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
      0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
      0.9445750230732326, 0.9894009349916499};
  static const double kGlWeight[8] = {
      0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
      0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
      0.0622535239386479, 0.0271524594117541};

  const double lo = std::log(r_lo), hi = std::log(r_hi);
  const int panels =
      std::min(12, std::max(6, static_cast<int>(std::ceil((hi - lo) / 1.5))));
  auto one_pass = [&](RngStream base) {
    double total = 0.0;
    for (int pnl = 0; pnl < panels; ++pnl) {
      const double a = lo + (hi - lo) * pnl / panels;
      const double b = lo + (hi - lo) * (pnl + 1) / panels;
      const double c = 0.5 * (a + b), h = 0.5 * (b - a);
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) {
        for (double sgn : {-1.0, 1.0}) {
          const double u = c + sgn * h * kGlNode[k];
          const double r = std::exp(u);
          acc += kGlWeight[k] * integrand(r, base) * r;  // du = dr / r
        }
      }
      total += acc * h;
    }
    return total;
  };
  const double va = one_pass(rng.child(1));
  const double vb = one_pass(rng.child(2));
  return {0.5 * (va + vb),
          0.5 * std::abs(va - vb) + mvn_target + tail_bound};
}

ExponentResult exponent_V(const MaxIdProcess& p, const Eigen::VectorXd& z,
                          const QuadratureSpec& spec, RngStream& rng,
                          double mvn_target) {
  return exponent_V(p.measure(), p.sigma(), z, spec, rng, mvn_target);
}

// ---------------------------------------------------------------------------
// Dependence summaries
// ---------------------------------------------------------------------------

double theta_level(const MaxIdProcess& p, const std::vector<int>& subset,
                   double z, RngStream& rng, const QuadratureSpec& spec,
                   double mvn_target) {
  if (subset.size() < 2) throw InvalidParameters("theta_level: |subset| >= 2");
  if (!(z > 0.0)) throw InvalidParameters("theta_level requires z > 0");
  const double zs = marginal_quantile(p.measure(), std::exp(-1.0 / z), spec);
  const int d = static_cast<int>(subset.size());
  Eigen::MatrixXd sub(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) sub(i, j) = p.sigma()(subset[i], subset[j]);
  }
  const Eigen::VectorXd zz = Eigen::VectorXd::Constant(d, zs);
  const auto res =
      exponent_V(p.measure(), CorrelationMatrix(sub), zz, spec, rng, mvn_target);
  return z * res.v;
}

DependenceSummary chi_level(const MaxIdProcess& p, int site1, int site2,
                            double z, const QuadratureSpec& spec) {
  if (!(z > 0.0)) throw InvalidParameters("chi_level requires z > 0");
  const double zs = marginal_quantile(p.measure(), std::exp(-1.0 / z), spec);
  BivariateKernel k(p.measure(), p.rho(site1, site2), spec);
  const double v2 = k.v(zs, zs);
  const double g1 = std::exp(-1.0 / z);          // marginal CDF at z*
  const double g12 = std::exp(-v2);              // joint CDF
  const double joint_exceed = 1.0 - 2.0 * g1 + g12;
  DependenceSummary out;
  out.z = z;
  out.theta = z * v2;
  out.chi_exact = std::clamp(joint_exceed / (1.0 - g1), 0.0, 1.0);
  out.chi_proxy = 2.0 - z * v2;
  return out;
}

double eta_coefficient(const CorrelationModel& cm, double beta, double h) {
  if (beta < 0.0) throw InvalidParameters("eta requires beta >= 0");
  if (beta == 0.0) return 1.0;
  const double rho = cm(h);
  return std::pow(0.5 * (1.0 + rho), beta / (beta + 2.0));
}

ExceedProbResult joint_exceed_prob(const RadialMeasure& m,
                                   const CorrelationModel& cm,
                                   const SiteConfig& grid, double prob_level,
                                   RngStream& rng, const QuadratureSpec& spec,
                                   double mvn_target) {
  if (grid.size() > kMaxMvnDim) {
    throw DimensionTooLarge("joint_exceed_prob grid too large");
  }
  const double z = marginal_quantile(m, prob_level, spec);
  const Eigen::VectorXd zz = Eigen::VectorXd::Constant(grid.size(), z);
  const auto sigma = [&] {
    const int n = grid.size();
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i) {
      s(i, i) = 1.0;
      for (int j = 0; j < i; ++j) {
        s(i, j) = s(j, i) = cm(grid.distance(i, j));
      }
    }
    return CorrelationMatrix(s);
  }();
  const auto res = exponent_V(m, sigma, zz, spec, rng, mvn_target);
  ExceedProbResult out;
  out.level = z;
  out.prob = 1.0 - std::exp(-res.v);
  out.error_estimate = std::exp(-res.v) * res.error_estimate;
  return out;
}

// ---------------------------------------------------------------------------
// Finite-measure model
// ---------------------------------------------------------------------------

MvnResult finite_model_cdf(const FiniteMeasureSpec& spec,
                           const Eigen::VectorXd& z, double target_err,
                           RngStream& rng) {
  const auto h = mvn_cdf(z, spec.corr, target_err, rng);
  const double p = std::exp(-spec.c * (1.0 - h.prob));
  return {p, p * spec.c * h.error_estimate};
}

double finite_model_bivariate_loglik(const FiniteMeasureSpec& spec, double z1,
                                     double z2) {
  if (spec.corr.dimension() != 2) {
    throw InvalidParameters("finite_model_bivariate_loglik needs D = 2");
  }
  const double rho = spec.corr(0, 1);
  const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
  const double c = spec.c;
  const double v = c * (1.0 - bivariate_normal_cdf(z1, z2, rho));
  const double v1 = -c * std_normal_cdf((z2 - rho * z1) / s) * std_normal_pdf(z1);
  const double v2 = -c * std_normal_cdf((z1 - rho * z2) / s) * std_normal_pdf(z2);
  const double v12 = -c * std::exp(bivariate_normal_logpdf(z1, z2, rho));
  double factor = v1 * v2 - v12;
  if (factor <= 0.0) {
    if (factor > -1e-12) {
      factor = 1e-300;
    } else {
      throw NumericalDensityFailure("finite-model density factor nonpositive");
    }
  }
  return -v + std::log(factor);
}

}  // namespace maxid
