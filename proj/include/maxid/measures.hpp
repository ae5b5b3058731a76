#pragma once

#include <string>
#include <vector>

#include "maxid/numerics.hpp"

namespace maxid {

enum class MeasureFamily { M1, M2, M3 };

std::string to_string(MeasureFamily f);
MeasureFamily measure_family_from_string(const std::string& s);

// Values of beta below this are treated as the exact max-stable limit to
// avoid 0/0 in exp{-alpha (r^beta - 1)/beta}.
inline constexpr double kBetaZeroTol = 1e-10;

// Numerical caps on tail masses (keeps downstream exp() calls finite).
inline constexpr double kTailMassCap = 1e12;
inline constexpr double kTailMassFloor = 1e-300;

// One of the three radial Poisson tail-measure families.
//   M1: kappa([r,inf)) = r^{-(1-alpha)} exp{-alpha(r^beta - 1)/beta},
//       alpha in [0,1)
//   M2: kappa([r,inf)) = r^{-beta} exp{-alpha(r^beta - 1)/beta}, alpha > 0
//   M3: M2 with alpha pinned to 1 (parsimonious Schlather-type submodel)
// beta = 0 denotes the max-stable limits r^{-1} (M1), r^{-alpha} (M2),
// r^{-1} (M3).
class RadialMeasure {
 public:
  RadialMeasure(MeasureFamily family, double alpha, double beta);

  MeasureFamily family() const { return family_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  bool is_max_stable() const { return beta_ < kBetaZeroTol; }

  // kappa([r, inf)), capped to [1e-300, 1e12]
  double tail_mass(double r) const;

  // f(r) = -d/dr tail_mass(r)
  double intensity(double r) const;

  // radius r with tail_mass(r) = u, 1e-10 relative
  double inv_tail(double u) const;

 private:
  MeasureFamily family_;
  double alpha_;
  double beta_;
};

// kappa~([z, inf)) of the elliptical radial measure in dimension D:
// integral of chi_sf(z/r, D) * intensity(r) dr.
double elliptical_tail(const RadialMeasure& m, int dim, double z,
                       const QuadratureSpec& spec = {});

// Tabulated kappa~ with its inverse for exact simulation. Forward values are
// cubic Hermite interpolants with quadrature-exact node slopes; the inverse
// inverts the same interpolant, so round trips are solver-exact.
class EllipticalRadialTable {
 public:
  EllipticalRadialTable(RadialMeasure source, int dim, int n_nodes = 2048);

  double forward(double z) const;  // kappa~([z, inf))
  double inverse(double u) const;  // z with kappa~([z, inf)) = u

  const RadialMeasure& source() const { return source_; }
  int dimension() const { return dim_; }

 private:
  double eval_log(double s, int* seg_hint) const;

  RadialMeasure source_;
  int dim_;
  std::vector<double> s_;   // log z, ascending
  std::vector<double> y_;   // log kappa~, descending
  std::vector<double> dy_;  // d log kappa~ / d log z at nodes
};

// Finite exponent measure Lambda = c * H with H multivariate standard
// Gaussian.
struct FiniteMeasureSpec {
  double c;
  CorrelationMatrix corr;

  FiniteMeasureSpec(double mass, CorrelationMatrix correlation,
                    double c_floor = 10.0, bool allow_small_c = false);
};

}  // namespace maxid
