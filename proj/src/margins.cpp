#include "maxid/margins.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "maxid/optim.hpp"

namespace maxid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void GevMargin::validate() const {
  if (!(sigma > 0.0)) throw InvalidParameters("GEV sigma must be > 0");
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw InvalidParameters("extremal index theta must be in (0,1]");
  }
}

BlockSpec BlockSpec::standard() {
  return {{"daily", "weekly", "monthly", "yearly"}, {1.0, 7.0, 30.0, 182.0}};
}

void BlockSpec::validate() const {
  if (sizes.empty() || sizes.front() != 1.0) {
    throw InvalidParameters("block sizes must start at 1");
  }
  for (std::size_t k = 1; k < sizes.size(); ++k) {
    if (!(sizes[k] > sizes[k - 1])) {
      throw InvalidParameters("block sizes must be strictly increasing");
    }
  }
  if (!labels.empty() && labels.size() != sizes.size()) {
    throw InvalidParameters("block labels/sizes length mismatch");
  }
}

double gev_cdf(const GevMargin& m, double z) {
  m.validate();
  const double s = (z - m.mu) / m.sigma;
  if (std::abs(m.xi) < kGevXiZeroTol) {
    return std::exp(-std::exp(-s));
  }
  const double arg = 1.0 + m.xi * s;
  if (arg <= 0.0) return (m.xi > 0.0) ? 0.0 : 1.0;
  return std::exp(-std::pow(arg, -1.0 / m.xi));
}

double gev_quantile(const GevMargin& m, double p) {
  m.validate();
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidParameters("gev_quantile requires p in (0,1)");
  }
  const double t = -std::log(p);
  if (std::abs(m.xi) < kGevXiZeroTol) {
    return m.mu - m.sigma * std::log(t);
  }
  return m.mu + m.sigma * (std::pow(t, -m.xi) - 1.0) / m.xi;
}

double gev_logpdf(const GevMargin& m, double z) {
  const double s = (z - m.mu) / m.sigma;
  if (std::abs(m.xi) < kGevXiZeroTol) {
    return -std::log(m.sigma) - s - std::exp(-s);
  }
  const double arg = 1.0 + m.xi * s;
  if (arg <= 0.0) return -kInf;
  const double lt = -std::log(arg) / m.xi;  // log t(z)
  return -std::log(m.sigma) + (1.0 + m.xi) * lt - std::exp(lt);
}

GevMargin rescale_gev(const GevMargin& m, double block_factor) {
  m.validate();
  if (!(block_factor > 0.0)) {
    throw InvalidParameters("block factor must be > 0");
  }
  GevMargin out = m;
  if (std::abs(m.xi) < kGevXiZeroTol) {
    out.mu = m.mu + m.sigma * std::log(block_factor);
  } else {
    const double mx = std::pow(block_factor, m.xi);
    out.sigma = m.sigma * mx;
    out.mu = m.mu - m.sigma * (1.0 - mx) / m.xi;
  }
  return out;
}

double to_frechet(double z, const GevMargin& m, double block_factor) {
  const double p = gev_cdf(rescale_gev(m, block_factor), z);
  if (p <= 0.0 || p >= 1.0) {
    throw OutOfSupport("to_frechet: value outside the margin support");
  }
  return -1.0 / std::log(p);
}

double from_frechet(double u, const GevMargin& m, double block_factor) {
  if (!(u > 0.0)) throw OutOfSupport("from_frechet requires u > 0");
  return gev_quantile(rescale_gev(m, block_factor), std::exp(-1.0 / u));
}

// ---------------------------------------------------------------------------
// Joint marginal fit
// ---------------------------------------------------------------------------

namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

GevFitResult fit_gev_joint(const std::vector<std::vector<double>>& series,
                           const BlockSpec& blocks) {
  blocks.validate();
  if (series.empty() || series.size() > blocks.sizes.size()) {
    throw InvalidParameters("series count does not match block spec");
  }
  if (series[0].empty()) {
    throw InvalidParameters("finest-scale series must be nonempty");
  }
  int active_scales = 0;
  for (const auto& s : series) {
    if (!s.empty()) ++active_scales;
    for (double v : s) {
      if (!std::isfinite(v)) throw InvalidParameters("non-finite observation");
    }
  }
  {
    const auto& s0 = series[0];
    const auto [mn, mx] = std::minmax_element(s0.begin(), s0.end());
    if (*mn == *mx) throw DegenerateSeries("constant series");
  }
  const bool theta_free = active_scales > 1;

  // moment starting values from the finest scale
  const auto& s0 = series[0];
  const double n0 = static_cast<double>(s0.size());
  const double mean = std::accumulate(s0.begin(), s0.end(), 0.0) / n0;
  double var = 0.0;
  for (double v : s0) var += (v - mean) * (v - mean);
  var /= std::max(1.0, n0 - 1.0);
  const double sigma0 = std::max(1e-6, std::sqrt(6.0 * var) / M_PI);
  const double mu0 = mean - 0.5772156649 * sigma0;

  auto unpack = [&](const std::vector<double>& x) {
    GevMargin m;
    m.mu = x[0];
    m.sigma = std::exp(x[1]);
    m.xi = x[2];
    m.theta = theta_free ? logistic(x[3]) : 1.0;
    return m;
  };

  auto nll = [&](const std::vector<double>& x) {
    const GevMargin m = unpack(x);
    if (m.sigma < 1e-12 || std::abs(m.xi) > 2.0) return kInf;
    double ll = 0.0;
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (series[k].empty()) continue;
      const GevMargin mk = rescale_gev(m, blocks.sizes[k] * m.theta);
      for (double z : series[k]) {
        const double lp = gev_logpdf(mk, z);
        if (!std::isfinite(lp)) return kInf;
        ll += lp;
      }
    }
    return -ll;
  };

  std::vector<double> x0 = {mu0, std::log(sigma0), 0.05};
  if (theta_free) x0.push_back(logit(0.7));

  NelderMeadOptions opts;
  opts.tol = 1e-7;
  opts.initial_step = 0.3;
  opts.restarts = 2;
  const auto r = nelder_mead(nll, x0, opts);

  GevFitResult out;
  out.margin = unpack(r.x);
  out.converged = r.converged && std::isfinite(r.fmin);
  out.theta_identifiable = theta_free;
  out.loglik = -r.fmin;
  out.n_evals = r.n_evals;
  return out;
}

Eigen::MatrixXd empirical_to_frechet(const Eigen::MatrixXd& data) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (n < 2) throw InvalidParameters("empirical_to_frechet requires n >= 2");
  Eigen::MatrixXd out(n, d);
  std::vector<int> idx(n);
  for (int j = 0; j < d; ++j) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return data(a, j) < data(b, j); });
    // average ranks over tie groups (1-based ranks)
    int i = 0;
    while (i < n) {
      int k = i;
      while (k + 1 < n && data(idx[k + 1], j) == data(idx[i], j)) ++k;
      const double avg_rank = 0.5 * (i + k) + 1.0;
      const double u = -1.0 / std::log(avg_rank / (n + 1.0));
      for (int t = i; t <= k; ++t) out(idx[t], j) = u;
      i = k + 1;
    }
  }
  return out;
}

}  // namespace maxid
