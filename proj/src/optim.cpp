#include "maxid/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace maxid {

namespace {

struct Vertex {
  std::vector<double> x;
  double f;
};

double diameter(const std::vector<Vertex>& simplex) {
  double d = 0.0;
  for (std::size_t i = 1; i < simplex.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < simplex[0].x.size(); ++j) {
      s = std::max(s, std::abs(simplex[i].x[j] - simplex[0].x[j]));
    }
    d = std::max(d, s);
  }
  return d;
}

}  // namespace

NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x0, const NelderMeadOptions& opts) {
  const int n = static_cast<int>(x0.size());
  NelderMeadResult res;
  res.x = x0;
  res.fmin = std::numeric_limits<double>::infinity();

  auto safe_f = [&](const std::vector<double>& x) {
    ++res.n_evals;
    const double v = f(x);
    return std::isfinite(v) ? v : 1e30;
  };

  std::vector<double> start = std::move(x0);
  double step = opts.initial_step;
  for (int restart = 0; restart <= opts.restarts; ++restart) {
    std::vector<Vertex> s(n + 1);
    s[0] = {start, safe_f(start)};
    for (int i = 0; i < n; ++i) {
      auto x = start;
      x[i] += step;
      s[i + 1] = {x, safe_f(x)};
    }
    bool converged = false;
    for (int it = 0; it < opts.max_iter; ++it) {
      std::sort(s.begin(), s.end(),
                [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
      if (diameter(s) < opts.tol) {
        converged = true;
        break;
      }
      // centroid of all but worst
      std::vector<double> c(n, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) c[j] += s[i].x[j];
      }
      for (double& v : c) v /= n;
      const Vertex& worst = s[n];

      auto blend = [&](double coef) {
        std::vector<double> x(n);
        for (int j = 0; j < n; ++j) x[j] = c[j] + coef * (worst.x[j] - c[j]);
        return x;
      };

      auto xr = blend(-1.0);
      const double fr = safe_f(xr);
      if (fr < s[0].f) {
        auto xe = blend(-2.0);
        const double fe = safe_f(xe);
        if (fe < fr) {
          s[n] = {std::move(xe), fe};
        } else {
          s[n] = {std::move(xr), fr};
        }
      } else if (fr < s[n - 1].f) {
        s[n] = {std::move(xr), fr};
      } else {
        const bool outside = fr < worst.f;
        auto xc = blend(outside ? -0.5 : 0.5);
        const double fc = safe_f(xc);
        if (fc < std::min(fr, worst.f)) {
          s[n] = {std::move(xc), fc};
        } else {
          // shrink toward the best vertex
          for (int i = 1; i <= n; ++i) {
            for (int j = 0; j < n; ++j) {
              s[i].x[j] = s[0].x[j] + 0.5 * (s[i].x[j] - s[0].x[j]);
            }
            s[i].f = safe_f(s[i].x);
          }
        }
      }
    }
    std::sort(s.begin(), s.end(),
              [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    if (s[0].f < res.fmin) {
      res.fmin = s[0].f;
      res.x = s[0].x;
      res.converged = converged;
    }
    start = res.x;
    step *= 0.25;  // tighter simplex around the incumbent
  }
  return res;
}

}  // namespace maxid
