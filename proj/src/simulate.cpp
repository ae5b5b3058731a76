#include "maxid/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maxid {

namespace {
constexpr long kMaxPointsPerReplicate = 10'000'000;
}

Eigen::MatrixXd simulate_exact(const MaxIdProcess& p,
                               const SimulationConfig& cfg,
                               const EllipticalRadialTable& table) {
  if (cfg.mode != SimulationMode::exact_elliptical) {
    throw InvalidParameters("simulate_exact requires exact_elliptical mode");
  }
  if (cfg.n_replicates < 1) throw InvalidParameters("n_replicates >= 1");
  const int d = p.sites().size();
  if (table.dimension() != d) {
    throw InvalidParameters("radial table dimension mismatch");
  }
  const Eigen::MatrixXd& lower = p.chol_lower();

  Eigen::MatrixXd out(cfg.n_replicates, d);
  for (int rep = 0; rep < cfg.n_replicates; ++rep) {
    RngStream stream = cfg.rng.child(static_cast<std::uint64_t>(rep));
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
    double zmin = 0.0;
    double u = 0.0;
    long count = 0;
    for (;;) {
      if (++count > kMaxPointsPerReplicate) {
        throw NonTermination("simulate_exact: point budget exhausted");
      }
      u += stream.exponential();
      const double radius = table.inverse(u);
      // per-site contribution of this point is bounded by radius (unit
      // diagonal correlation), so no later point can change the maximum
      if (zmin > 0.0 && radius <= cfg.stop_factor * zmin) break;
      const Eigen::VectorXd x = lower * sample_unit_sphere(d, stream);
      z = z.cwiseMax(radius * x);
      zmin = z.minCoeff();
    }
    out.row(rep) = z.transpose();
  }
  return out;
}

Eigen::MatrixXd simulate_exact(const MaxIdProcess& p,
                               const SimulationConfig& cfg) {
  EllipticalRadialTable table(p.measure(), p.sites().size());
  return simulate_exact(p, cfg, table);
}

Eigen::MatrixXd simulate_truncated(const MaxIdProcess& p,
                                   const SimulationConfig& cfg) {
  if (cfg.mode != SimulationMode::epsilon_truncated) {
    throw InvalidParameters("simulate_truncated requires epsilon_truncated");
  }
  if (cfg.n_replicates < 1) throw InvalidParameters("n_replicates >= 1");
  const RadialMeasure& m = p.measure();
  const double eps = (cfg.epsilon > 0.0) ? cfg.epsilon : m.inv_tail(1e5);
  const double total_mass = m.tail_mass(eps);
  const int d = p.sites().size();
  const Eigen::MatrixXd& lower = p.chol_lower();

  Eigen::MatrixXd out(cfg.n_replicates, d);
  Eigen::VectorXd g(d);
  for (int rep = 0; rep < cfg.n_replicates; ++rep) {
    RngStream stream = cfg.rng.child(static_cast<std::uint64_t>(rep));
    Eigen::VectorXd z = Eigen::VectorXd::Zero(d);
    const std::uint64_t n_points = stream.poisson(total_mass);
    for (std::uint64_t i = 0; i < n_points; ++i) {
      const double radius = m.inv_tail(total_mass * stream.uniform());
      for (int j = 0; j < d; ++j) g[j] = stream.normal();
      z = z.cwiseMax(radius * (lower * g));
    }
    out.row(rep) = z.transpose();
  }
  return out;
}

FiniteSimResult simulate_finite(const FiniteMeasureSpec& spec, int n,
                                RngStream& rng) {
  if (n < 1) throw InvalidParameters("simulate_finite: n >= 1");
  const int d = spec.corr.dimension();
  const Eigen::MatrixXd lower = cholesky_with_jitter(spec.corr).lower;
  FiniteSimResult res;
  res.values.resize(n, d);
  res.boundary.assign(n, false);
  Eigen::VectorXd g(d);
  for (int rep = 0; rep < n; ++rep) {
    RngStream stream = rng.child(static_cast<std::uint64_t>(rep));
    const std::uint64_t count = stream.poisson(spec.c);
    if (count == 0) {
      res.boundary[rep] = true;
      res.values.row(rep).setConstant(
          -std::numeric_limits<double>::infinity());
      continue;
    }
    Eigen::VectorXd z = Eigen::VectorXd::Constant(
        d, -std::numeric_limits<double>::infinity());
    for (std::uint64_t i = 0; i < count; ++i) {
      for (int j = 0; j < d; ++j) g[j] = stream.normal();
      z = z.cwiseMax(lower * g);
    }
    res.values.row(rep) = z.transpose();
  }
  return res;
}

McEstimate estimate_p_mc(const RadialMeasure& m, const CorrelationModel& cm,
                         const SiteConfig& grid, double prob_level, int n_sim,
                         RngStream& rng) {
  if (n_sim < 1000) throw InvalidParameters("estimate_p_mc: n_sim >= 1000");
  const double z = marginal_quantile(m, prob_level);
  MaxIdProcess proc(m, cm, grid);
  SimulationConfig cfg;
  cfg.n_replicates = n_sim;
  cfg.mode = SimulationMode::exact_elliptical;
  cfg.rng = rng;
  const Eigen::MatrixXd sims = simulate_exact(proc, cfg);
  long hits = 0;
  for (int i = 0; i < n_sim; ++i) {
    if (sims.row(i).maxCoeff() > z) ++hits;
  }
  McEstimate out;
  out.prob = static_cast<double>(hits) / n_sim;
  out.std_error = std::sqrt(out.prob * (1.0 - out.prob) / n_sim);
  out.level = z;
  return out;
}

}  // namespace maxid
