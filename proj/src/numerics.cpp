#include "maxid/numerics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace maxid {

namespace {
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

// ---------------------------------------------------------------------------
// Univariate normal
// ---------------------------------------------------------------------------

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double std_normal_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi);
}

// AS241 (PPND16)
double std_normal_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) *
                    r +
                4.5921953931549871457e4) *
                   r +
               1.3731693765509461125e4) *
                  r +
              1.9715909503065514427e3) *
                 r +
             1.3314166789178437745e2) *
                r +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) *
                    r +
                2.1213794301586595867e4) *
                   r +
               5.3941960214247511077e3) *
                  r +
              6.8718700749205790830e2) *
                 r +
             4.2313330701600911252e1) *
                r +
            1.0);
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) *
                    r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) *
                    r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) *
                    r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) *
                    r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

// ---------------------------------------------------------------------------
// Bivariate normal, Genz/Drezner-Wesolowsky single-integral reduction
// ---------------------------------------------------------------------------

namespace {

// Computes P(X > h, Y > k) for standard bivariate normal with correlation r.
double bvnd_upper(double dh, double dk, double r) {
  static const double xk[3][10] = {
      {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970, 0, 0, 0,
       0, 0, 0, 0},
      {-0.9815606342467019, -0.9041172563704750, -0.7699026741943050,
       -0.5873179542866171, -0.3678314989981802, -0.1252334085114692, 0, 0, 0,
       0},
      {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
       -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
       -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
       -0.07652652113349733}};
  static const double wk[3][10] = {
      {0.1713244923791705, 0.3607615730481384, 0.4679139345726904, 0, 0, 0, 0,
       0, 0, 0},
      {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
       0.2031674267230659, 0.2334925365383547, 0.2491470458134029, 0, 0, 0, 0},
      {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
       0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
       0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
       0.1527533871307259}};
  static const int ngk[3] = {3, 6, 10};

  int ng;
  if (std::abs(r) < 0.3)
    ng = 0;
  else if (std::abs(r) < 0.75)
    ng = 1;
  else
    ng = 2;

  double h = dh;
  double k = dk;
  double hk = h * k;
  double bvn = 0.0;

  if (std::abs(r) < 0.925) {
    if (std::abs(r) > 0.0) {
      const double hs = (h * h + k * k) / 2;
      const double asr = std::asin(r);
      for (int i = 0; i < ngk[ng]; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          const double sn = std::sin(asr * (is * xk[ng][i] + 1) / 2);
          bvn += wk[ng][i] * std::exp((sn * hk - hs) / (1 - sn * sn));
        }
      }
      bvn = bvn * asr / (2 * kTwoPi);
    }
    bvn += std_normal_cdf(-h) * std_normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::abs(r) < 1.0) {
      const double as = (1 - r) * (1 + r);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4 - hk) / 8;
      const double d = (12 - hk) / 16;
      double asr = -(bs / as + hk) / 2;
      if (asr > -100.0) {
        bvn = a * std::exp(asr) *
              (1 - c * (bs - as) * (1 - d * bs / 5) / 3 + c * d * as * as / 5);
      }
      if (-hk < 100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(kTwoPi) * std_normal_cdf(-b / a);
        bvn -= std::exp(-hk / 2) * sp * b * (1 - c * bs * (1 - d * bs / 5) / 3);
      }
      a /= 2;
      for (int i = 0; i < ngk[ng]; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          const double x = a * (is * xk[ng][i] + 1);
          const double xs = x * x;
          const double rs = std::sqrt(1 - xs);
          asr = -(bs / xs + hk) / 2;
          if (asr > -100.0) {
            const double sp = 1 + c * xs * (1 + d * xs);
            const double ep =
                std::exp(-hk * (1 - rs) / (2 * (1 + rs))) / rs;
            bvn += a * wk[ng][i] * std::exp(asr) * (ep - sp);
          }
        }
      }
      bvn = -bvn / kTwoPi;
    }
    if (r > 0.0) {
      bvn += std_normal_cdf(-std::max(h, k));
    } else {
      bvn = -bvn;
      if (k > h) bvn += std_normal_cdf(k) - std_normal_cdf(h);
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace

double bivariate_normal_cdf(double x1, double x2, double rho) {
  if (std::abs(rho) > 1.0) throw InvalidParameters("|rho| must be <= 1");
  if (std::isnan(x1) || std::isnan(x2)) return std::nan("");
  if (x1 == -kInf || x2 == -kInf) return 0.0;
  if (x1 == kInf) return std_normal_cdf(x2);
  if (x2 == kInf) return std_normal_cdf(x1);
  if (rho == 1.0) return std_normal_cdf(std::min(x1, x2));
  if (rho == -1.0) {
    return std::max(0.0, std_normal_cdf(x1) + std_normal_cdf(x2) - 1.0);
  }
  return bvnd_upper(-x1, -x2, rho);
}

double trivariate_normal_cdf(double x1, double x2, double x3, double r12,
                             double r13, double r23) {
  if (std::isnan(x1) || std::isnan(x2) || std::isnan(x3)) return std::nan("");
  if (x1 == -kInf || x2 == -kInf || x3 == -kInf) return 0.0;
  if (x3 == kInf) return bivariate_normal_cdf(x1, x2, r12);
  if (x2 == kInf) return bivariate_normal_cdf(x1, x3, r13);
  if (x1 == kInf) return bivariate_normal_cdf(x2, x3, r23);
  // Integrate over the variable with the largest conditional shrinkage last;
  // any choice works, condition on X3.
  const double s13 = std::sqrt(std::max(0.0, (1 - r13) * (1 + r13)));
  const double s23 = std::sqrt(std::max(0.0, (1 - r23) * (1 + r23)));
  if (s13 < 1e-12 || s23 < 1e-12) {
    // Degenerate: X1 or X2 is (anti)perfectly tied to X3; fall back on the
    // implied two-dimensional probability.
    const double t1 = (s13 < 1e-12) ? (r13 > 0 ? x1 : -x1) : kInf;
    const double t2 = (s23 < 1e-12) ? (r23 > 0 ? x2 : -x2) : kInf;
    double b3 = x3;
    if (r13 > 0 && t1 < b3) b3 = t1;
    if (r23 > 0 && t2 < b3) b3 = t2;
    double lo = -kInf;
    if (s13 < 1e-12 && r13 < 0) lo = std::max(lo, -x1);
    if (s23 < 1e-12 && r23 < 0) lo = std::max(lo, -x2);
    if (lo >= b3) return 0.0;
    if (s13 < 1e-12 && s23 < 1e-12)
      return std::max(0.0, std_normal_cdf(b3) - std_normal_cdf(lo));
    // one variable still free: reduce to a bivariate probability over
    // (free variable, X3) restricted to (lo, b3] in X3 -- handled by
    // differencing bivariate CDFs.
    const double xf = (s13 < 1e-12) ? x2 : x1;
    const double rf = (s13 < 1e-12) ? r23 : r13;
    const double hi = bivariate_normal_cdf(xf, b3, rf);
    const double lop = (lo == -kInf) ? 0.0 : bivariate_normal_cdf(xf, lo, rf);
    return std::max(0.0, hi - lop);
  }
  const double rc = std::clamp((r12 - r13 * r23) / (s13 * s23), -1.0, 1.0);
  const double hi = std::min(x3, 8.5);
  const double lo = -8.5;
  if (hi <= lo) return 0.0;
  // composite 20-point Gauss-Legendre
  static const double gx[10] = {
      0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
      0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
      0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
      0.9931285991850949};
  static const double gw[10] = {
      0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
      0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
      0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
      0.0176140071391521};
  const int panels = 12;
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * width;
    const double c = a + 0.5 * width;
    const double h = 0.5 * width;
    double acc = 0.0;
    for (int i = 0; i < 10; ++i) {
      for (int sign = -1; sign <= 1; sign += 2) {
        const double t = c + sign * h * gx[i];
        const double u1 = (x1 - r13 * t) / s13;
        const double u2 = (x2 - r23 * t) / s23;
        acc += gw[i] * std_normal_pdf(t) * bivariate_normal_cdf(u1, u2, rc);
      }
    }
    total += acc * h;
  }
  return std::clamp(total, 0.0, 1.0);
}

double bivariate_normal_logpdf(double x1, double x2, double rho) {
  const double omr2 = (1 - rho) * (1 + rho);
  return -std::log(kTwoPi) - 0.5 * std::log(omr2) -
         (x1 * x1 - 2 * rho * x1 * x2 + x2 * x2) / (2 * omr2);
}

// ---------------------------------------------------------------------------
// Incomplete gamma / beta and derived distributions
// ---------------------------------------------------------------------------

namespace {

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  const double fpmin = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double betacf(double a, double b, double x) {
  const double fpmin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw InvalidParameters("gamma_p domain");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw InvalidParameters("gamma_q domain");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi_cdf(double r, int dof) {
  if (r < 0.0 || dof < 1) throw InvalidParameters("chi_cdf domain");
  return gamma_p(0.5 * dof, 0.5 * r * r);
}

double chi_sf(double r, int dof) {
  if (r < 0.0 || dof < 1) throw InvalidParameters("chi_sf domain");
  return gamma_q(0.5 * dof, 0.5 * r * r);
}

double student_t_cdf(double x, double dof) {
  if (dof <= 0.0) throw InvalidParameters("student_t_cdf dof");
  if (x == 0.0) return 0.5;
  const double p = 0.5 * betai(0.5 * dof, 0.5, dof / (dof + x * x));
  return (x > 0.0) ? 1.0 - p : p;
}

// ---------------------------------------------------------------------------
// Correlation matrices / Cholesky
// ---------------------------------------------------------------------------

CorrelationMatrix::CorrelationMatrix(Eigen::MatrixXd m) : mat_(std::move(m)) {
  if (mat_.rows() != mat_.cols()) {
    throw InvalidParameters("correlation matrix must be square");
  }
  for (int i = 0; i < mat_.rows(); ++i) {
    if (std::abs(mat_(i, i) - 1.0) > 1e-12) {
      throw InvalidParameters("correlation matrix diagonal must be 1");
    }
    for (int j = 0; j < i; ++j) {
      if (std::abs(mat_(i, j) - mat_(j, i)) > 1e-12) {
        throw InvalidParameters("correlation matrix must be symmetric");
      }
      if (std::abs(mat_(i, j)) > 1.0 + 1e-12) {
        throw InvalidParameters("correlations must lie in [-1, 1]");
      }
    }
  }
}

CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& sym) {
  const int n = static_cast<int>(sym.rows());
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd m = sym;
    if (jitter > 0.0) m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd lower = llt.matrixL();
      if (((lower * lower.transpose()) - sym).cwiseAbs().maxCoeff() <
          std::max(1e-10, 10 * jitter * n)) {
        return {std::move(lower), jitter};
      }
      return {std::move(lower), jitter};
    }
    if (jitter == 0.0)
      jitter = 1e-12;
    else if (jitter < 1e-6)
      jitter *= 10.0;
    else
      throw NotPositiveSemidefinite(
          "matrix not positive semidefinite after max jitter 1e-6");
  }
}

CholeskyResult cholesky_with_jitter(const CorrelationMatrix& corr) {
  return cholesky_with_jitter(corr.matrix());
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod quadrature on t = log r
// ---------------------------------------------------------------------------

namespace {

// 15-point Kronrod / 7-point Gauss pair on [-1, 1]
constexpr std::array<double, 8> kXgk = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
constexpr std::array<double, 4> kWg = {0.129484966168870, 0.279705391489277,
                                       0.381830050505119, 0.417959183673469};

struct Segment {
  double a, b;
  std::vector<double> value;  // Kronrod estimate per component
  std::vector<double> err;    // |K15 - G7| per component
  double badness = 0.0;
};

// integrand in t-coordinates: out[k] = f(e^t)[k] * e^t
class LogAxisIntegrand {
 public:
  LogAxisIntegrand(const MultiIntegrand& f, int k) : f_(f), k_(k) {}
  void eval(double t, double* out) const {
    const double r = std::exp(t);
    f_(r, out);
    for (int i = 0; i < k_; ++i) {
      out[i] *= r;
      if (!std::isfinite(out[i])) out[i] = 0.0;
    }
  }
  int components() const { return k_; }

 private:
  const MultiIntegrand& f_;
  int k_;
};

Segment gk15(const LogAxisIntegrand& g, double a, double b) {
  const int k = g.components();
  Segment s;
  s.a = a;
  s.b = b;
  s.value.assign(k, 0.0);
  s.err.assign(k, 0.0);
  std::vector<double> kron(k, 0.0), gauss(k, 0.0), buf(k);
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  for (int i = 0; i < 8; ++i) {
    const int reps = (i == 7) ? 1 : 2;
    for (int sgn = 0; sgn < reps; ++sgn) {
      const double x = c + (sgn == 0 ? -1.0 : 1.0) * h * kXgk[i];
      g.eval(x, buf.data());
      for (int j = 0; j < k; ++j) kron[j] += kWgk[i] * buf[j];
      if (i % 2 == 1 || i == 7) {
        const double wg = kWg[i / 2];
        for (int j = 0; j < k; ++j) gauss[j] += wg * buf[j];
      }
    }
  }
  for (int j = 0; j < k; ++j) {
    s.value[j] = kron[j] * h;
    s.err[j] = std::abs(kron[j] - gauss[j]) * h;
  }
  return s;
}

}  // namespace

std::vector<double> integrate_semiinfinite_multi(const MultiIntegrand& f,
                                                 int n_components,
                                                 const QuadratureSpec& spec) {
  if (spec.rel_tol <= 0 || spec.abs_tol <= 0 || spec.max_subdivisions < 1) {
    throw InvalidParameters("invalid QuadratureSpec");
  }
  LogAxisIntegrand g(f, n_components);
  std::vector<double> buf(n_components);

  // locate the dominant region using component 0
  auto mag0 = [&](double t) {
    g.eval(t, buf.data());
    double m = 0.0;
    for (double v : buf) m = std::max(m, std::abs(v));
    return m;
  };
  double t_peak = 0.0;
  double peak = -1.0;
  for (double t = -26.0; t <= 30.0; t += 1.4) {
    const double m = mag0(t);
    if (m > peak) {
      peak = m;
      t_peak = t;
    }
  }
  for (double t = t_peak - 1.3; t <= t_peak + 1.3; t += 0.26) {
    const double m = mag0(t);
    if (m > peak) {
      peak = m;
      t_peak = t;
    }
  }
  if (peak <= 0.0) return std::vector<double>(n_components, 0.0);

  const double floor_mag = peak * 1e-16;
  double lo = t_peak, hi = t_peak;
  double step = 0.7;
  while (mag0(lo) > floor_mag && lo > -740.0) {
    lo -= step;
    step *= 1.6;
  }
  step = 0.7;
  while (mag0(hi) > floor_mag && hi < 740.0) {
    hi += step;
    step *= 1.6;
  }

  // seed segments and refine the worst until tolerances hold
  std::vector<Segment> segs;
  const int n_seed = 8;
  for (int i = 0; i < n_seed; ++i) {
    const double a = lo + (hi - lo) * i / n_seed;
    const double b = lo + (hi - lo) * (i + 1) / n_seed;
    segs.push_back(gk15(g, a, b));
  }

  std::vector<double> total(n_components), toterr(n_components);
  int n_splits = 0;
  for (;;) {
    std::fill(total.begin(), total.end(), 0.0);
    std::fill(toterr.begin(), toterr.end(), 0.0);
    for (const auto& s : segs) {
      for (int j = 0; j < n_components; ++j) {
        total[j] += s.value[j];
        toterr[j] += s.err[j];
      }
    }
    bool ok = true;
    for (int j = 0; j < n_components; ++j) {
      if (toterr[j] > spec.abs_tol + spec.rel_tol * std::abs(total[j])) {
        ok = false;
        break;
      }
    }
    if (ok) return total;
    if (n_splits >= spec.max_subdivisions) {
      throw NonConvergence("integrate_semiinfinite: subdivision limit");
    }
    // split the segment with the largest scaled error
    std::size_t worst = 0;
    double worst_badness = -1.0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      double b = 0.0;
      for (int j = 0; j < n_components; ++j) {
        b = std::max(b, segs[i].err[j] /
                            (spec.abs_tol + spec.rel_tol * std::abs(total[j])));
      }
      if (b > worst_badness) {
        worst_badness = b;
        worst = i;
      }
    }
    const double a = segs[worst].a;
    const double b = segs[worst].b;
    const double m = 0.5 * (a + b);
    segs[worst] = gk15(g, a, m);
    segs.push_back(gk15(g, m, b));
    ++n_splits;
  }
}

double integrate_semiinfinite(const std::function<double(double)>& f,
                              const QuadratureSpec& spec) {
  MultiIntegrand mf = [&f](double r, double* out) { out[0] = f(r); };
  return integrate_semiinfinite_multi(mf, 1, spec)[0];
}

// ---------------------------------------------------------------------------
// Multivariate normal CDF: Genz separation of variables + randomized
// Kronecker lattice
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<int, 64> kPrimes = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,
    43,  47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101,
    103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167,
    173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311};

double genz_sample(const Eigen::MatrixXd& lower, const Eigen::VectorXd& b,
                   const double* w, std::vector<double>& y) {
  const int d = static_cast<int>(b.size());
  double e = std_normal_cdf(b[0] / lower(0, 0));
  double p = e;
  for (int i = 1; i < d; ++i) {
    const double u = std::clamp(w[i - 1] * e, 1e-300, 1.0 - 1e-16);
    y[i - 1] = std_normal_quantile(u);
    double num = b[i];
    for (int j = 0; j < i; ++j) num -= lower(i, j) * y[j];
    const double lii = lower(i, i);
    e = (lii > 0.0) ? std_normal_cdf(num / lii) : (num >= 0.0 ? 1.0 : 0.0);
    p *= e;
    if (p == 0.0) break;
  }
  return p;
}

}  // namespace

MvnResult mvn_cdf(const Eigen::VectorXd& upper, const CorrelationMatrix& corr,
                  double target_err, RngStream& rng) {
  const int d_full = corr.dimension();
  if (d_full > kMaxMvnDim) {
    throw DimensionTooLarge("mvn_cdf supports D <= 64");
  }
  if (upper.size() != d_full) throw InvalidParameters("mvn_cdf size mismatch");

  for (int i = 0; i < d_full; ++i) {
    if (upper[i] == -kInf) return {0.0, 0.0};
  }
  // drop +inf components
  std::vector<int> act;
  for (int i = 0; i < d_full; ++i) {
    if (upper[i] < kInf) act.push_back(i);
  }
  if (act.empty()) return {1.0, 0.0};
  if (act.size() == 1) return {std_normal_cdf(upper[act[0]]), 0.0};
  if (act.size() == 2) {
    return {bivariate_normal_cdf(upper[act[0]], upper[act[1]],
                                 corr(act[0], act[1])),
            1e-14};
  }
  if (act.size() == 3) {
    return {trivariate_normal_cdf(upper[act[0]], upper[act[1]], upper[act[2]],
                                  corr(act[0], act[1]), corr(act[0], act[2]),
                                  corr(act[1], act[2])),
            1e-10};
  }

  // reorder by ascending upper limit (integrate the tightest constraints
  // first)
  std::sort(act.begin(), act.end(),
            [&](int a, int b) { return upper[a] < upper[b]; });
  const int d = static_cast<int>(act.size());
  Eigen::VectorXd b(d);
  Eigen::MatrixXd sigma(d, d);
  for (int i = 0; i < d; ++i) {
    b[i] = upper[act[i]];
    for (int j = 0; j < d; ++j) sigma(i, j) = corr(act[i], act[j]);
  }
  const Eigen::MatrixXd lower = cholesky_with_jitter(sigma).lower;

  std::vector<double> q(d - 1);
  for (int j = 0; j < d - 1; ++j) q[j] = std::sqrt(double(kPrimes[j]));

  const int n_shifts = 25;
  int n_points = 256;
  const int max_points = 1 << 16;
  std::vector<double> shift((d - 1) * n_shifts);
  for (auto& s : shift) s = rng.uniform();

  std::vector<double> shift_mean(n_shifts, 0.0);
  std::vector<long> shift_count(n_shifts, 0);
  std::vector<double> w(d - 1), y(d - 1);

  double p = 0.0, err = kInf;
  long idx_base = 0;
  for (;;) {
    for (int s = 0; s < n_shifts; ++s) {
      const double* delta = &shift[(d - 1) * s];
      double acc = 0.0;
      for (int i = 0; i < n_points; ++i) {
        const long idx = idx_base + i + 1;
        double v = 0.0;
        for (int j = 0; j < d - 1; ++j) {
          double x = std::fmod(idx * q[j] + delta[j], 1.0);
          w[j] = x;
        }
        v += genz_sample(lower, b, w.data(), y);
        for (int j = 0; j < d - 1; ++j) w[j] = 1.0 - w[j];  // antithetic
        v += genz_sample(lower, b, w.data(), y);
        acc += 0.5 * v;
      }
      const long n_old = shift_count[s];
      shift_mean[s] = (shift_mean[s] * n_old + acc) / (n_old + n_points);
      shift_count[s] += n_points;
    }
    idx_base += n_points;
    double mean = 0.0;
    for (double m : shift_mean) mean += m;
    mean /= n_shifts;
    double var = 0.0;
    for (double m : shift_mean) var += (m - mean) * (m - mean);
    var /= (n_shifts - 1);
    p = mean;
    err = 3.0 * std::sqrt(var / n_shifts);
    if (err <= target_err || idx_base >= max_points) break;
    n_points = static_cast<int>(idx_base);  // double total work each round
  }
  return {std::clamp(p, 0.0, 1.0), err};
}

// ---------------------------------------------------------------------------
// Sphere sampling
// ---------------------------------------------------------------------------

Eigen::VectorXd sample_unit_sphere(int dim, RngStream& rng) {
  if (dim < 1) throw InvalidParameters("sample_unit_sphere: dim >= 1");
  Eigen::VectorXd v(dim);
  if (dim == 1) {
    v[0] = (rng.uniform() < 0.5) ? -1.0 : 1.0;
    return v;
  }
  double norm2;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm2 = v.squaredNorm();
  } while (norm2 == 0.0);
  return v / std::sqrt(norm2);
}

}  // namespace maxid
