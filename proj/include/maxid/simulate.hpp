#pragma once

#include <Eigen/Dense>
#include <vector>

#include "maxid/model.hpp"

namespace maxid {

enum class SimulationMode { exact_elliptical, epsilon_truncated };

struct SimulationConfig {
  int n_replicates = 1;
  SimulationMode mode = SimulationMode::exact_elliptical;
  double epsilon = 0.0;  // <= 0: choose so tail_mass(epsilon) = 1e5
  RngStream rng{0, 0};
  // Multiplies the exact-mode stopping threshold; < 1 generates extra
  // (provably inert) points. Used to validate the stopping rule.
  double stop_factor = 1.0;
};

// Exact simulation through the elliptical representation: ordered radial
// points from the inverse tabulated tail measure, sphere directions through
// the Cholesky factor, stop once the next radius cannot alter the maximum.
// Rows are replicates, columns sites. Deterministic given cfg.rng; replicate
// i uses the child stream cfg.rng.child(i).
Eigen::MatrixXd simulate_exact(const MaxIdProcess& p,
                               const SimulationConfig& cfg);

// Variant reusing a prebuilt radial table (must match p's measure and D).
Eigen::MatrixXd simulate_exact(const MaxIdProcess& p,
                               const SimulationConfig& cfg,
                               const EllipticalRadialTable& table);

// Two-step epsilon-truncated simulation: Poisson point count with mean
// tail_mass(epsilon), radii by inverse sampling above epsilon, Gaussian
// spectral vectors. Bias vanishes as epsilon -> 0.
Eigen::MatrixXd simulate_truncated(const MaxIdProcess& p,
                                   const SimulationConfig& cfg);

struct FiniteSimResult {
  Eigen::MatrixXd values;          // -inf rows where boundary
  std::vector<bool> boundary;      // true when the Poisson count was 0
};

FiniteSimResult simulate_finite(const FiniteMeasureSpec& spec, int n,
                                RngStream& rng);

struct McEstimate {
  double prob = 0.0;
  double std_error = 0.0;
  double level = 0.0;
};

// Monte-Carlo estimate of the joint exceedance probability p(z) at the
// prob_level marginal quantile, using exact simulation on `grid`.
McEstimate estimate_p_mc(const RadialMeasure& m, const CorrelationModel& cm,
                         const SiteConfig& grid, double prob_level, int n_sim,
                         RngStream& rng);

}  // namespace maxid
