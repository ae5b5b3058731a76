#include "maxid/rng.hpp"

#include <cmath>

#include "maxid/errors.hpp"

namespace maxid {

namespace {

// truncated Stirling series for log(k!), used by PTRD
double log_factorial(double k) {
  static const double table[] = {0.0,
                                 0.0,
                                 0.6931471805599453,
                                 1.791759469228055,
                                 3.1780538303479458,
                                 4.787491742782046,
                                 6.579251212010101,
                                 8.525161361065415,
                                 10.60460290274525,
                                 12.801827480081469};
  if (k < 10.0) return table[static_cast<int>(k)];
  const double k1 = k + 1.0;
  return (k1 - 0.5) * std::log(k1) - k1 + 0.9189385332046727 +
         1.0 / (12.0 * k1) - 1.0 / (360.0 * k1 * k1 * k1);
}

}  // namespace

std::uint64_t RngStream::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) {
    throw InvalidParameters("poisson mean must be finite and nonnegative");
  }
  if (mean == 0.0) return 0;
  if (mean < 30.0) {
    // chop-down inversion
    const double expm = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform();
    while (prod > expm) {
      prod *= uniform();
      ++k;
    }
    return k;
  }
  // PTRD: transformed rejection with squeeze (Hoermann 1993)
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    const double log_v =
        std::log(v * inv_alpha / (a / (us * us) + b));
    const double rhs = k * std::log(mean) - mean - log_factorial(k);
    if (log_v <= rhs) return static_cast<std::uint64_t>(k);
  }
}

}  // namespace maxid
