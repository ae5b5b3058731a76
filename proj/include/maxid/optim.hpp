#pragma once

#include <functional>
#include <vector>

namespace maxid {

struct NelderMeadOptions {
  double tol = 1e-6;        // simplex diameter tolerance
  int max_iter = 4000;      // per restart
  int restarts = 2;         // re-expand the simplex around the incumbent
  double initial_step = 0.5;
};

struct NelderMeadResult {
  std::vector<double> x;
  double fmin = 0.0;
  bool converged = false;
  int n_evals = 0;
};

// Derivative-free simplex minimizer with restarts. Deterministic given the
// starting point and options.
NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x0, const NelderMeadOptions& opts = {});

}  // namespace maxid
