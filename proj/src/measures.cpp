#include "maxid/measures.hpp"

#include <algorithm>
#include <cmath>

namespace maxid {

std::string to_string(MeasureFamily f) {
  switch (f) {
    case MeasureFamily::M1:
      return "M1";
    case MeasureFamily::M2:
      return "M2";
    case MeasureFamily::M3:
      return "M3";
  }
  return "?";
}

MeasureFamily measure_family_from_string(const std::string& s) {
  if (s == "M1") return MeasureFamily::M1;
  if (s == "M2") return MeasureFamily::M2;
  if (s == "M3") return MeasureFamily::M3;
  throw ConfigError("unknown measure family: " + s);
}

RadialMeasure::RadialMeasure(MeasureFamily family, double alpha, double beta)
    : family_(family), alpha_(alpha), beta_(beta) {
  if (beta < 0.0 || !std::isfinite(beta)) {
    throw InvalidParameters("beta must be >= 0");
  }
  switch (family) {
    case MeasureFamily::M1:
      if (alpha < 0.0 || alpha >= 1.0) {
        throw InvalidParameters("M1 requires alpha in [0,1)");
      }
      break;
    case MeasureFamily::M2:
      if (alpha <= 0.0 || !std::isfinite(alpha)) {
        throw InvalidParameters("M2 requires alpha > 0");
      }
      break;
    case MeasureFamily::M3:
      alpha_ = 1.0;  // pinned by the family
      break;
  }
}

double RadialMeasure::tail_mass(double r) const {
  if (r <= 0.0) throw InvalidParameters("tail_mass requires r > 0");
  const double lr = std::log(r);
  double log_mass;
  if (is_max_stable()) {
    const double exponent = (family_ == MeasureFamily::M2) ? alpha_ : 1.0;
    log_mass = -exponent * lr;
  } else {
    const double decay = -alpha_ * std::expm1(beta_ * lr) / beta_;
    const double power =
        (family_ == MeasureFamily::M1) ? (alpha_ - 1.0) : -beta_;
    log_mass = power * lr + decay;
  }
  if (log_mass > std::log(kTailMassCap)) return kTailMassCap;
  if (log_mass < std::log(kTailMassFloor)) return kTailMassFloor;
  return std::exp(log_mass);
}

double RadialMeasure::intensity(double r) const {
  if (r <= 0.0) throw InvalidParameters("intensity requires r > 0");
  if (is_max_stable()) {
    const double exponent = (family_ == MeasureFamily::M2) ? alpha_ : 1.0;
    return exponent * std::pow(r, -exponent - 1.0);
  }
  const double decay = std::exp(-alpha_ * std::expm1(beta_ * std::log(r)) / beta_);
  if (family_ == MeasureFamily::M1) {
    return ((1.0 - alpha_) * std::pow(r, alpha_ - 2.0) +
            alpha_ * std::pow(r, alpha_ + beta_ - 2.0)) *
           decay;
  }
  return (beta_ * std::pow(r, -beta_ - 1.0) + alpha_ / r) * decay;
}

double RadialMeasure::inv_tail(double u) const {
  if (u <= 0.0 || !std::isfinite(u)) {
    throw InvalidParameters("inv_tail requires u > 0");
  }
  const double log_u = std::log(u);
  if (is_max_stable()) {
    const double exponent = (family_ == MeasureFamily::M2) ? alpha_ : 1.0;
    return std::exp(-log_u / exponent);
  }
  // solve h(t) = log tail_mass(e^t) - log u = 0; h is strictly decreasing
  auto h = [&](double t) {
    const double power =
        (family_ == MeasureFamily::M1) ? (alpha_ - 1.0) : -beta_;
    return power * t - alpha_ * std::expm1(beta_ * t) / beta_ - log_u;
  };
  auto hp = [&](double t) {
    const double power =
        (family_ == MeasureFamily::M1) ? (alpha_ - 1.0) : -beta_;
    return power - alpha_ * std::exp(beta_ * t);
  };
  double lo = 0.0, hi = 0.0;
  if (h(0.0) >= 0.0) {
    double step = 1.0;
    while (h(hi) > 0.0) {
      lo = hi;
      hi += step;
      step *= 2.0;
    }
  } else {
    double step = 1.0;
    while (h(lo) < 0.0) {
      hi = lo;
      lo -= step;
      step *= 2.0;
    }
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double ht = h(t);
    if (ht > 0.0)
      lo = t;
    else
      hi = t;
    double tn = t - ht / hp(t);
    if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
    if (std::abs(tn - t) < 1e-13 * (1.0 + std::abs(t))) {
      t = tn;
      break;
    }
    t = tn;
  }
  return std::exp(t);
}

// ---------------------------------------------------------------------------
// Elliptical radial measure
// ---------------------------------------------------------------------------

namespace {

double chi_logpdf(double x, int dof) {
  // x^{D-1} e^{-x^2/2} / (2^{D/2-1} Gamma(D/2))
  return (dof - 1) * std::log(x) - 0.5 * x * x -
         (0.5 * dof - 1.0) * std::log(2.0) - std::lgamma(0.5 * dof);
}

}  // namespace

double elliptical_tail(const RadialMeasure& m, int dim, double z,
                       const QuadratureSpec& spec) {
  if (z <= 0.0) throw InvalidParameters("elliptical_tail requires z > 0");
  auto f = [&](double r) { return chi_sf(z / r, dim) * m.intensity(r); };
  const double v = integrate_semiinfinite(f, spec);
  return std::clamp(v, kTailMassFloor, kTailMassCap);
}

EllipticalRadialTable::EllipticalRadialTable(RadialMeasure source, int dim,
                                             int n_nodes)
    : source_(std::move(source)), dim_(dim) {
  if (dim < 1) throw InvalidParameters("EllipticalRadialTable: dim >= 1");
  if (n_nodes < 16) throw InvalidParameters("EllipticalRadialTable: nodes");

  QuadratureSpec spec;
  spec.rel_tol = 1e-10;
  spec.abs_tol = 1e-280;

  // kappa~ and z * d/dz kappa~ in a single pass
  auto pair_eval = [&](double z) {
    MultiIntegrand f = [&](double r, double* out) {
      const double x = z / r;
      const double fi = source_.intensity(r);
      out[0] = chi_sf(x, dim_) * fi;
      out[1] = -x * std::exp(chi_logpdf(x, dim_)) * fi;  // z * d/dz term
    };
    return integrate_semiinfinite_multi(f, 2, spec);
  };

  // bracket z so tabulated masses span [1e-12, 1e12]
  double z_lo = 1.0, z_hi = 1.0;
  while (pair_eval(z_lo)[0] < kTailMassCap * 0.999 && z_lo > 1e-14) z_lo *= 0.5;
  while (pair_eval(z_hi)[0] > 1e-12 && z_hi < 1e14) z_hi *= 1.5;

  const double s_lo = std::log(z_lo), s_hi = std::log(z_hi);
  s_.resize(n_nodes);
  y_.resize(n_nodes);
  dy_.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const double s = s_lo + (s_hi - s_lo) * i / (n_nodes - 1);
    const auto v = pair_eval(std::exp(s));
    s_[i] = s;
    y_[i] = std::log(std::max(v[0], kTailMassFloor));
    dy_[i] = v[1] / std::max(v[0], kTailMassFloor);  // d log kappa~/d log z
  }
  // the tabulated tail mass must be strictly decreasing
  for (int i = 1; i < n_nodes; ++i) {
    if (!(y_[i] < y_[i - 1])) {
      throw NonConvergence("elliptical table not strictly decreasing");
    }
  }
}

double EllipticalRadialTable::eval_log(double s, int* seg_hint) const {
  const int n = static_cast<int>(s_.size());
  if (s <= s_.front()) {  // linear extrapolation in log-log
    if (seg_hint) *seg_hint = 0;
    return y_.front() + dy_.front() * (s - s_.front());
  }
  if (s >= s_.back()) {
    if (seg_hint) *seg_hint = n - 2;
    return y_.back() + dy_.back() * (s - s_.back());
  }
  const int i =
      static_cast<int>(std::upper_bound(s_.begin(), s_.end(), s) -
                       s_.begin()) -
      1;
  if (seg_hint) *seg_hint = i;
  const double h = s_[i + 1] - s_[i];
  const double t = (s - s_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  // cubic Hermite basis
  return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * dy_[i] +
         (-2 * t3 + 3 * t2) * y_[i + 1] + (t3 - t2) * h * dy_[i + 1];
}

double EllipticalRadialTable::forward(double z) const {
  if (z <= 0.0) throw InvalidParameters("forward requires z > 0");
  const double y = eval_log(std::log(z), nullptr);
  return std::clamp(std::exp(y), kTailMassFloor, kTailMassCap);
}

double EllipticalRadialTable::inverse(double u) const {
  if (u <= 0.0) throw InvalidParameters("inverse requires u > 0");
  const double target = std::log(u);
  // bracket in s using the node table (y_ strictly decreasing)
  double lo, hi;
  if (target >= y_.front()) {
    lo = s_.front() + (target - y_.front()) / dy_.front() - 1.0;
    hi = s_.front();
  } else if (target <= y_.back()) {
    lo = s_.back();
    hi = s_.back() + (target - y_.back()) / dy_.back() + 1.0;
  } else {
    const int i =
        static_cast<int>(std::lower_bound(y_.rbegin(), y_.rend(), target) -
                         y_.rbegin());
    // y_[n-i] <= target <= y_[n-i-1]
    const int n = static_cast<int>(y_.size());
    const int k = std::clamp(n - i - 1, 0, n - 2);
    lo = s_[k];
    hi = s_[k + 1];
  }
  // bisection + Newton polish on the interpolant
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double y = eval_log(s, nullptr);
    if (y > target)
      lo = s;
    else
      hi = s;
    const double mid = 0.5 * (lo + hi);
    if (std::abs(hi - lo) < 1e-14 * (1.0 + std::abs(mid))) break;
    s = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Finite exponent measure
// ---------------------------------------------------------------------------

FiniteMeasureSpec::FiniteMeasureSpec(double mass, CorrelationMatrix correlation,
                                     double c_floor, bool allow_small_c)
    : c(mass), corr(std::move(correlation)) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw InvalidParameters("finite measure mass c must be > 0");
  }
  if (!allow_small_c && c < c_floor) {
    throw InvalidParameters(
        "finite measure mass c below c0; boundary mass exp(-c) is not "
        "negligible (pass allow_small_c to override)");
  }
}

}  // namespace maxid
