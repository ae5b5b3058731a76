#include "maxid/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "maxid/errors.hpp"

namespace maxid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logit(double p) { return std::log(p / (1.0 - p)); }
double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

// ---------------------------------------------------------------------------
// ParamVector
// ---------------------------------------------------------------------------

void ParamVector::validate() const {
  measure();  // family-specific (alpha, beta) domain checks
  corr().validate();
  if (family == MeasureFamily::M3 && alpha_free) {
    throw InvalidParameters("M3 pins alpha; it cannot be free");
  }
}

RadialMeasure ParamVector::measure() const {
  return RadialMeasure(family, alpha, beta);
}

CorrelationModel ParamVector::corr() const { return {lambda, nu}; }

int ParamVector::n_free() const {
  return (alpha_free ? 1 : 0) + (beta_free ? 1 : 0) + (lambda_free ? 1 : 0) +
         (nu_free ? 1 : 0);
}

std::vector<std::string> ParamVector::free_names() const {
  std::vector<std::string> names;
  if (alpha_free) names.push_back("alpha");
  if (beta_free) names.push_back("beta");
  if (lambda_free) names.push_back("lambda");
  if (nu_free) names.push_back("nu");
  return names;
}

Eigen::VectorXd ParamVector::pack() const {
  Eigen::VectorXd t(n_free());
  int k = 0;
  if (alpha_free) {
    t[k++] = (family == MeasureFamily::M1) ? logit(alpha) : std::log(alpha);
  }
  if (beta_free) t[k++] = std::log(std::max(beta, 1e-8));
  if (lambda_free) t[k++] = std::log(lambda);
  if (nu_free) t[k++] = logit(nu / 2.0);
  return t;
}

void ParamVector::unpack(const Eigen::VectorXd& t) {
  if (t.size() != n_free()) {
    throw InvalidParameters("transformed coordinate size mismatch");
  }
  int k = 0;
  if (alpha_free) {
    alpha = (family == MeasureFamily::M1) ? expit(t[k]) : std::exp(t[k]);
    ++k;
  }
  if (beta_free) beta = std::exp(t[k++]);
  if (lambda_free) lambda = std::exp(t[k++]);
  if (nu_free) nu = 2.0 * expit(t[k++]);
}

Eigen::VectorXd ParamVector::transform_jacobian() const {
  Eigen::VectorXd j(n_free());
  int k = 0;
  if (alpha_free) {
    j[k++] = (family == MeasureFamily::M1) ? alpha * (1.0 - alpha) : alpha;
  }
  if (beta_free) j[k++] = beta;
  if (lambda_free) j[k++] = lambda;
  if (nu_free) j[k++] = nu * (1.0 - nu / 2.0);
  return j;
}

// ---------------------------------------------------------------------------
// PairWeights
// ---------------------------------------------------------------------------

PairWeights::PairWeights(const SiteConfig& sites, double cutoff)
    : cutoff_(cutoff) {
  if (!(cutoff > 0.0)) throw InvalidParameters("cutoff must be positive");
  const int d = sites.size();
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (sites.distance(i, j) < cutoff) active_.emplace_back(i, j);
    }
  }
  if (active_.empty()) {
    throw InvalidParameters("no site pair within the cutoff distance");
  }
}

// ---------------------------------------------------------------------------
// Pairwise likelihood
// ---------------------------------------------------------------------------

namespace {

void check_data(const Eigen::MatrixXd& data, const SiteConfig& sites) {
  if (data.cols() != sites.size()) {
    throw InvalidParameters("data columns must match the number of sites");
  }
  if (data.rows() < 1) throw InvalidParameters("no replicates");
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const double z = data(i, j);
      if (!std::isnan(z) && !(z > 0.0)) {
        throw InvalidParameters("data must be positive on the Frechet scale");
      }
    }
  }
}

std::vector<BivariateKernel> build_kernels(const ParamVector& psi,
                                           const SiteConfig& sites,
                                           const PairWeights& weights,
                                           const QuadratureSpec& spec) {
  const RadialMeasure m = psi.measure();
  const CorrelationModel cm = psi.corr();
  std::vector<BivariateKernel> kernels;
  kernels.reserve(weights.active().size());
  for (const auto& [j1, j2] : weights.active()) {
    kernels.emplace_back(m, cm(sites.distance(j1, j2)), spec);
  }
  return kernels;
}

}  // namespace

double pairwise_nll(const ParamVector& psi, const Eigen::MatrixXd& data,
                    const SiteConfig& sites, const PairWeights& weights,
                    const QuadratureSpec& spec, std::string* diagnostic) {
  check_data(data, sites);
  std::vector<BivariateKernel> kernels;
  try {
    kernels = build_kernels(psi, sites, weights, spec);
  } catch (const Error& e) {
    if (diagnostic) *diagnostic = e.what();
    return kInf;
  }
  double nll = 0.0;
  const auto& pairs = weights.active();
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto [j1, j2] = pairs[p];
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      const double z1 = data(i, j1), z2 = data(i, j2);
      if (std::isnan(z1) || std::isnan(z2)) continue;
      try {
        nll -= kernels[p].loglik(z1, z2);
      } catch (const Error& e) {
        if (diagnostic) {
          std::ostringstream os;
          os << "pair (" << j1 << "," << j2 << "), replicate " << i << ": "
             << e.what();
          *diagnostic = os.str();
        }
        return kInf;
      }
    }
  }
  return nll;
}

Eigen::VectorXd pairwise_loglik_by_replicate(const ParamVector& psi,
                                             const Eigen::MatrixXd& data,
                                             const SiteConfig& sites,
                                             const PairWeights& weights,
                                             const QuadratureSpec& spec) {
  check_data(data, sites);
  const auto kernels = build_kernels(psi, sites, weights, spec);
  Eigen::VectorXd ll = Eigen::VectorXd::Zero(data.rows());
  const auto& pairs = weights.active();
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto [j1, j2] = pairs[p];
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      const double z1 = data(i, j1), z2 = data(i, j2);
      if (std::isnan(z1) || std::isnan(z2)) continue;
      try {
        ll[i] += kernels[p].loglik(z1, z2);
      } catch (const Error& e) {
        std::ostringstream os;
        os << "pair (" << j1 << "," << j2 << "), replicate " << i << ": "
           << e.what();
        throw NumericalDensityFailure(os.str());
      }
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

// Range guess from the empirical variogram of log-data: per active pair,
// gamma(h) = mean (log z_j1 - log z_j2)^2 / 2; the implied correlation
// 1 - gamma/sill gives a per-pair lambda, take the median.
double lambda_guess(const Eigen::MatrixXd& data, const SiteConfig& sites,
                    const PairWeights& weights, double nu) {
  const Eigen::Index n = data.rows();
  // pooled variance of log-data
  double sum = 0.0, sumsq = 0.0;
  long cnt = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (std::isnan(data(i, j))) continue;
      const double v = std::log(data(i, j));
      sum += v;
      sumsq += v * v;
      ++cnt;
    }
  }
  if (cnt < 4) return 0.5;
  const double mean = sum / cnt;
  const double sill = std::max(sumsq / cnt - mean * mean, 1e-8);

  std::vector<double> guesses;
  std::vector<double> dists;
  for (const auto& [j1, j2] : weights.active()) {
    double g = 0.0;
    long m = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z1 = data(i, j1), z2 = data(i, j2);
      if (std::isnan(z1) || std::isnan(z2)) continue;
      const double d = std::log(z1) - std::log(z2);
      g += 0.5 * d * d;
      ++m;
    }
    if (m < 2) continue;
    g /= m;
    const double h = sites.distance(j1, j2);
    dists.push_back(h);
    const double rho = std::clamp(1.0 - g / sill, 0.02, 0.98);
    guesses.push_back(h / std::pow(-std::log(rho), 1.0 / nu));
  }
  if (guesses.empty()) return 0.5;
  std::nth_element(guesses.begin(), guesses.begin() + guesses.size() / 2,
                   guesses.end());
  double lam = guesses[guesses.size() / 2];
  const double hmax = *std::max_element(dists.begin(), dists.end());
  return std::clamp(lam, 0.01 * hmax, 20.0 * hmax);
}

}  // namespace

FitResult fit_pairwise_single(const Eigen::MatrixXd& data,
                              const SiteConfig& sites, const ParamVector& tmpl,
                              const FitConfig& config) {
  if (data.rows() < 2) throw InvalidParameters("need at least 2 replicates");
  tmpl.validate();
  const PairWeights weights(sites, config.cutoff);

  ParamVector start = tmpl;
  if (start.beta_free && !(start.beta > 0.0)) start.beta = config.beta_init;
  const double lam0 =
      lambda_guess(data, sites, weights, std::max(start.nu, 0.2));

  const auto objective = [&](const std::vector<double>& t) {
    ParamVector psi = start;
    psi.unpack(Eigen::Map<const Eigen::VectorXd>(t.data(), t.size()));
    return pairwise_nll(psi, data, sites, weights, config.quad);
  };

  std::vector<double> lam_scales = {1.0};
  if (config.multistart && start.lambda_free) lam_scales = {0.5, 1.0, 2.0};

  NelderMeadResult best;
  best.fmin = kInf;
  long total_evals = 0;
  for (double s : lam_scales) {
    ParamVector p0 = start;
    if (p0.lambda_free) p0.lambda = s * lam0;
    Eigen::VectorXd t0 = p0.pack();
    std::vector<double> x0(t0.data(), t0.data() + t0.size());
    NelderMeadResult r = nelder_mead(objective, x0, config.nm);
    total_evals += r.n_evals;
    if (r.fmin < best.fmin) best = r;
  }
  if (!std::isfinite(best.fmin)) {
    throw NonConvergence("pairwise likelihood is degenerate at all starts");
  }

  FitResult result;
  result.psi = start;
  result.psi.unpack(
      Eigen::Map<const Eigen::VectorXd>(best.x.data(), best.x.size()));
  result.pl_value = -best.fmin;
  result.converged = best.converged;
  result.n_function_evals = total_evals;
  result.beta_boundary = result.psi.beta_free && result.psi.beta < 1e-2;

  if (config.compute_godambe && result.psi.n_free() > 0) {
    const GodambeResult g =
        godambe(result.psi, data, sites, weights, config.quad);
    result.J_hat = g.J;
    result.K_hat = g.K;
    result.std_errors = g.std_errors;
    result.beta_boundary = result.beta_boundary || g.beta_boundary;
    result.clic_star =
        clic_star(result.pl_value, g.J, g.K, weights, sites.size());
  }
  return result;
}

std::pair<FitResult, FitResult> fit_pairwise(const Eigen::MatrixXd& data,
                                             const SiteConfig& sites,
                                             const ParamVector& tmpl,
                                             const FitConfig& config) {
  ParamVector free_tmpl = tmpl;
  free_tmpl.beta_free = true;
  if (!(free_tmpl.beta > 0.0)) free_tmpl.beta = config.beta_init;

  ParamVector fixed_tmpl = tmpl;
  fixed_tmpl.beta_free = false;
  fixed_tmpl.beta = 0.0;

  FitResult free_fit = fit_pairwise_single(data, sites, free_tmpl, config);
  FitResult fixed_fit = fit_pairwise_single(data, sites, fixed_tmpl, config);
  return {free_fit, fixed_fit};
}

// ---------------------------------------------------------------------------
// Godambe sandwich
// ---------------------------------------------------------------------------

GodambeResult godambe(const ParamVector& psi_hat, const Eigen::MatrixXd& data,
                      const SiteConfig& sites, const PairWeights& weights,
                      const QuadratureSpec& spec) {
  const int p = psi_hat.n_free();
  if (p == 0) throw InvalidParameters("no free parameters");
  const Eigen::Index n = data.rows();
  const Eigen::VectorXd t0 = psi_hat.pack();

  const auto by_rep = [&](const Eigen::VectorXd& t) {
    ParamVector psi = psi_hat;
    psi.unpack(t);
    return pairwise_loglik_by_replicate(psi, data, sites, weights, spec);
  };

  // scores: central differences, 1e-4 relative per transformed coordinate
  Eigen::MatrixXd scores(n, p);
  for (int k = 0; k < p; ++k) {
    const double h = 1e-4 * std::max(1.0, std::abs(t0[k]));
    Eigen::VectorXd tp = t0, tm = t0;
    tp[k] += h;
    tm[k] -= h;
    scores.col(k) = (by_rep(tp) - by_rep(tm)) / (2.0 * h);
  }
  const Eigen::RowVectorXd sbar = scores.colwise().mean();
  const Eigen::MatrixXd centered = scores.rowwise() - sbar;
  Eigen::MatrixXd K = centered.transpose() * centered / double(n);

  // J = -Hessian of the mean pairwise log-likelihood, step 1e-3
  const auto mean_ll = [&](const Eigen::VectorXd& t) {
    return by_rep(t).mean();
  };
  Eigen::VectorXd hs(p);
  for (int k = 0; k < p; ++k) hs[k] = 1e-3 * std::max(1.0, std::abs(t0[k]));
  const double f0 = mean_ll(t0);
  Eigen::MatrixXd J(p, p);
  for (int k = 0; k < p; ++k) {
    Eigen::VectorXd tp = t0, tm = t0;
    tp[k] += hs[k];
    tm[k] -= hs[k];
    J(k, k) = -(mean_ll(tp) - 2.0 * f0 + mean_ll(tm)) / (hs[k] * hs[k]);
  }
  for (int k = 0; k < p; ++k) {
    for (int l = k + 1; l < p; ++l) {
      Eigen::VectorXd tpp = t0, tpm = t0, tmp = t0, tmm = t0;
      tpp[k] += hs[k];
      tpp[l] += hs[l];
      tpm[k] += hs[k];
      tpm[l] -= hs[l];
      tmp[k] -= hs[k];
      tmp[l] += hs[l];
      tmm[k] -= hs[k];
      tmm[l] -= hs[l];
      const double v = -(mean_ll(tpp) - mean_ll(tpm) - mean_ll(tmp) +
                         mean_ll(tmm)) /
                       (4.0 * hs[k] * hs[l]);
      J(k, l) = v;
      J(l, k) = v;
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (!lu.isInvertible()) {
    throw SingularInformation("numerical information matrix is singular");
  }
  const Eigen::MatrixXd Jinv = lu.inverse();
  const Eigen::MatrixXd var_t = Jinv * K * Jinv / double(n);

  GodambeResult out;
  out.J = J;
  out.K = K;
  const Eigen::VectorXd jac = psi_hat.transform_jacobian();
  out.std_errors.resize(p);
  for (int k = 0; k < p; ++k) {
    const double v = std::max(var_t(k, k), 0.0);
    out.std_errors[k] = std::sqrt(v) * std::abs(jac[k]);
  }
  out.beta_boundary = psi_hat.beta_free && psi_hat.beta < 1e-2;
  return out;
}

double clic_star(double pl_value, const Eigen::MatrixXd& J,
                 const Eigen::MatrixXd& K, const PairWeights& weights, int D) {
  if (D < 2) throw InvalidParameters("D must be >= 2");
  if (J.rows() != J.cols() || J.rows() != K.rows() || K.rows() != K.cols()) {
    throw InvalidParameters("J and K must be square matrices of equal size");
  }
  const double C = 2.0 * weights.weight_sum() / double(D);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
  if (!lu.isInvertible()) {
    throw SingularInformation("J is singular in CLIC*");
  }
  const double trace = (lu.solve(K)).trace();
  return -2.0 * pl_value / C + 2.0 * trace / C;
}

// ---------------------------------------------------------------------------
// Full-likelihood oracle (D <= 5)
// ---------------------------------------------------------------------------

namespace {

// all set partitions of {0..d-1} as block-index vectors (restricted growth)
void enumerate_partitions(int d, std::vector<std::vector<int>>& out) {
  std::vector<int> a(d, 0);
  const std::function<void(int, int)> rec = [&](int i, int maxb) {
    if (i == d) {
      out.push_back(a);
      return;
    }
    for (int b = 0; b <= maxb; ++b) {
      a[i] = b;
      rec(i + 1, std::max(maxb, b + 1));
    }
  };
  rec(0, 0);
}

}  // namespace

double full_nll_oracle(const ParamVector& psi, const Eigen::MatrixXd& data,
                       const SiteConfig& sites, const QuadratureSpec& spec,
                       double fd_step_rel) {
  const int d = sites.size();
  if (d > 5) throw DimensionTooLarge("full_nll_oracle supports D <= 5");
  check_data(data, sites);
  psi.validate();

  const RadialMeasure m = psi.measure();
  const CorrelationModel cm = psi.corr();
  Eigen::MatrixXd sig(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      sig(i, j) = (i == j) ? 1.0 : cm(sites.distance(i, j));
    }
  }
  const CorrelationMatrix corr(sig);

  // fixed stream: exponent_V draws its QMC shifts from children of this
  // object without advancing it, so repeated calls are deterministic and V
  // is smooth in z (finite differences stay meaningful)
  RngStream rng(20240915, 0);
  const auto V = [&](const Eigen::VectorXd& z) {
    return exponent_V(m, corr, z, spec, rng, 1e-6).v;
  };

  std::vector<std::vector<int>> partitions;
  enumerate_partitions(d, partitions);

  double nll = 0.0;
  for (Eigen::Index rep = 0; rep < data.rows(); ++rep) {
    const Eigen::VectorXd z = data.row(rep);
    const double v0 = V(z);

    // mixed partial of V over every nonempty subset, via tensor-product
    // central differences; cached by bitmask and shared across partitions
    std::vector<double> dv(size_t(1) << d, 0.0);
    for (unsigned mask = 1; mask < (1u << d); ++mask) {
      std::vector<int> idx;
      for (int j = 0; j < d; ++j) {
        if (mask & (1u << j)) idx.push_back(j);
      }
      const int k = static_cast<int>(idx.size());
      double acc = 0.0;
      double denom = 1.0;
      for (int j : idx) denom *= 2.0 * fd_step_rel * z[j];
      for (unsigned corner = 0; corner < (1u << k); ++corner) {
        Eigen::VectorXd zp = z;
        int sign = 1;
        for (int t = 0; t < k; ++t) {
          const int j = idx[t];
          if (corner & (1u << t)) {
            zp[j] += fd_step_rel * z[j];
          } else {
            zp[j] -= fd_step_rel * z[j];
            sign = -sign;
          }
        }
        acc += sign * V(zp);
      }
      dv[mask] = acc / denom;
    }

    double density_sum = 0.0;
    for (const auto& part : partitions) {
      const int nblocks = 1 + *std::max_element(part.begin(), part.end());
      std::vector<unsigned> masks(nblocks, 0);
      for (int j = 0; j < d; ++j) masks[part[j]] |= (1u << j);
      double prod = 1.0;
      for (int b = 0; b < nblocks; ++b) prod *= -dv[masks[b]];
      density_sum += prod;
    }
    if (!(density_sum > 0.0)) {
      throw NumericalDensityFailure(
          "partition sum is nonpositive in full_nll_oracle");
    }
    nll -= -v0 + std::log(density_sum);
  }
  return nll;
}

}  // namespace maxid
