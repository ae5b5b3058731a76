#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maxid/errors.hpp"
#include "maxid/model.hpp"

using namespace maxid;

namespace {

// two sites at distance h with lambda chosen so rho(h) = rho
SiteConfig pair_sites(double h) {
  Eigen::MatrixX2d xy(2, 2);
  xy << 0.0, 0.0, h, 0.0;
  return SiteConfig({"a", "b"}, xy);
}

CorrelationModel corr_for(double rho, double h) {
  // rho = 0 realized as a vanishingly small range
  return {-h / std::log(std::max(rho, 1e-12)), 1.0};
}

}  // namespace

TEST_CASE("powered exponential correlation") {
  const CorrelationModel cm{0.5, 1.5};
  CHECK(cm(0.0) == 1.0);
  CHECK(cm(0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(cm(1.0) == doctest::Approx(std::exp(-std::pow(2.0, 1.5))).epsilon(1e-14));
  CHECK_THROWS_AS((CorrelationModel{0.5, 2.5}.validate()), InvalidParameters);
  CHECK_THROWS_AS((CorrelationModel{-1.0, 1.0}.validate()), InvalidParameters);
}

TEST_CASE("site configs: grid spacing and distances") {
  const SiteConfig g = SiteConfig::regular_grid(6, 0.0, 1.0);
  CHECK(g.size() == 36);
  CHECK(g.distance(0, 1) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(g.distance(0, 35) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  RngStream rng(3, 0);
  const SiteConfig u = SiteConfig::uniform_random(10, rng);
  CHECK(u.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(u.coords()(i, 0) >= 0.0);
    CHECK(u.coords()(i, 0) <= 1.0);
  }
}

TEST_CASE("marginal exponent function oracle values") {
  QuadratureSpec spec;
  spec.rel_tol = 1e-10;
  const RadialMeasure m3(MeasureFamily::M3, 1.0, 1.0);
  CHECK(marginal_V(m3, 0.5, spec) == doctest::Approx(1.3121719034981427).epsilon(1e-8));
  CHECK(marginal_V(m3, 1.0, spec) == doctest::Approx(0.4337140520567618).epsilon(1e-8));
  CHECK(marginal_V(m3, 5.0, spec) == doctest::Approx(0.0072797487364566595).epsilon(1e-8));
  CHECK(marginal_V(RadialMeasure(MeasureFamily::M1, 0.3, 1.5), 2.0, spec) ==
        doctest::Approx(0.15700544230293148).epsilon(1e-8));
  CHECK(marginal_V(RadialMeasure(MeasureFamily::M2, 2.0, 0.5), 1.0, spec) ==
        doctest::Approx(0.5204027000533892).epsilon(1e-8));
}

TEST_CASE("max-stable margins are exactly unit Frechet") {
  // beta = 0, alpha = 1: kappa = r^-1 gives V(z) = 1/z after normalization
  const RadialMeasure ms(MeasureFamily::M3, 1.0, 0.0);
  QuadratureSpec spec;
  spec.rel_tol = 1e-10;
  // the spectral construction carries a normalizing constant; V(z)*z must be
  // constant over z (exact 1/z decay)
  const double c = marginal_V(ms, 1.0, spec);
  for (double z : {0.2, 2.0, 20.0}) {
    CHECK(marginal_V(ms, z, spec) * z == doctest::Approx(c).epsilon(1e-9));
  }
}

TEST_CASE("marginal quantile inverts the marginal cdf") {
  const RadialMeasure m(MeasureFamily::M3, 1.0, 1.0);
  QuadratureSpec spec;
  for (double p : {0.01, 0.5, 0.9, 0.99, 0.999}) {
    const double z = marginal_quantile(m, p, spec);
    CHECK(std::exp(-marginal_V(m, z, spec)) == doctest::Approx(p).epsilon(1e-7));
  }
}

TEST_CASE("bivariate kernel oracle values") {
  QuadratureSpec spec;
  spec.rel_tol = 1e-9;
  // M3, beta = 1, rho = 0.5, z = (1, 2); independently integrated reference
  const BivariateKernel k(RadialMeasure(MeasureFamily::M3, 1.0, 1.0), 0.5, spec);
  CHECK(k.v(1.0, 2.0) == doctest::Approx(0.4751678993392469).epsilon(1e-7));
  const BivDerivs d = k.v_all(1.0, 2.0);
  CHECK(d.v == doctest::Approx(0.4751678993392469).epsilon(1e-7));
  CHECK(d.v1 == doctest::Approx(-0.7436236468057755).epsilon(1e-7));
  CHECK(d.v2 == doctest::Approx(-0.06181735379516602).epsilon(1e-7));
  CHECK(d.v12 == doctest::Approx(-0.04534477516920453).epsilon(1e-7));
  CHECK(k.loglik(1.0, 2.0) == doctest::Approx(-2.8686232097975712).epsilon(1e-7));

  // M1, alpha = 0.3, beta = 1.5, rho = -0.3, z = (0.8, 1.3)
  const BivariateKernel k2(RadialMeasure(MeasureFamily::M1, 0.3, 1.5), -0.3, spec);
  const BivDerivs d2 = k2.v_all(0.8, 1.3);
  CHECK(d2.v == doctest::Approx(0.670629725225864).epsilon(1e-7));
  CHECK(d2.v1 == doctest::Approx(-0.5150560688349962).epsilon(1e-7));
  CHECK(d2.v2 == doctest::Approx(-0.20204325496475664).epsilon(1e-7));
  CHECK(d2.v12 == doctest::Approx(-0.0383833733853337).epsilon(1e-7));
}

TEST_CASE("kernel derivatives agree with finite differences of v") {
  QuadratureSpec spec;
  spec.rel_tol = 1e-10;
  const BivariateKernel k(RadialMeasure(MeasureFamily::M2, 2.0, 0.7), 0.4, spec);
  for (double z1 : {0.6, 1.5}) {
    for (double z2 : {0.9, 3.0}) {
      const BivDerivs d = k.v_all(z1, z2);
      const double h1 = 1e-4 * z1, h2 = 1e-4 * z2;
      const double fd1 = (k.v(z1 + h1, z2) - k.v(z1 - h1, z2)) / (2 * h1);
      const double fd2 = (k.v(z1, z2 + h2) - k.v(z1, z2 - h2)) / (2 * h2);
      const double fd12 = (k.v(z1 + h1, z2 + h2) - k.v(z1 + h1, z2 - h2) -
                           k.v(z1 - h1, z2 + h2) + k.v(z1 - h1, z2 - h2)) /
                          (4 * h1 * h2);
      CHECK(d.v1 == doctest::Approx(fd1).epsilon(2e-6));
      CHECK(d.v2 == doctest::Approx(fd2).epsilon(2e-6));
      CHECK(d.v12 == doctest::Approx(fd12).epsilon(2e-4));
    }
  }
}

TEST_CASE("kernel limits: comonotone and independent pairs") {
  QuadratureSpec spec;
  const RadialMeasure m(MeasureFamily::M3, 1.0, 1.0);
  // rho = 1: V(z, z) must equal the marginal V(z)
  const BivariateKernel k1(m, 1.0, spec);
  CHECK(k1.v(1.5, 1.5) == doctest::Approx(marginal_V(m, 1.5, spec)).epsilon(1e-8));
  // rho = 1, distinct levels: V(z1, z2) = marginal V(min(z1, z2))
  CHECK(k1.v(1.0, 2.0) == doctest::Approx(marginal_V(m, 1.0, spec)).epsilon(1e-8));
}

TEST_CASE("extremal coefficients: Schlather closed form at beta=0") {
  const RadialMeasure ms(MeasureFamily::M3, 1.0, 0.0);
  QuadratureSpec spec;
  RngStream rng(17, 0);
  for (double rho : {0.0, 0.5, 0.9}) {
    const MaxIdProcess p(ms, corr_for(rho, 1.0), pair_sites(1.0));
    const double expected = 1.0 + std::sqrt((1.0 - rho) / 2.0);
    for (double z : {0.5, 1.0, 10.0, 100.0}) {
      CHECK(theta_level(p, {0, 1}, z, rng, spec) ==
            doctest::Approx(expected).epsilon(2e-3));
    }
  }
}

TEST_CASE("extremal coefficients: extremal-t closed form at beta=0") {
  QuadratureSpec spec;
  RngStream rng(18, 0);
  struct Case {
    double alpha, rho, expected;
  };
  // 2 T_{a+1}(sqrt((a+1)(1-rho)/(1+rho))), frozen from reference software
  const Case cases[] = {
      {2.0, 0.0, 1.8183098861837907}, {2.0, 0.3, 1.7066615946086061},
      {2.0, 0.5, 1.6089977810442295}, {2.0, 0.9, 1.282314355789214},
      {5.0, 0.0, 1.9501747372194234}, {5.0, 0.3, 1.8776134603241839},
      {5.0, 0.5, 1.79296875},         {5.0, 0.9, 1.4054969522947274},
  };
  for (const auto& c : cases) {
    const RadialMeasure m(MeasureFamily::M2, c.alpha, 0.0);
    const double rho_eff = std::max(c.rho, 1e-9);  // rho=0 via huge distance
    const MaxIdProcess p(m, corr_for(rho_eff, 1.0), pair_sites(1.0));
    CHECK(theta_level(p, {0, 1}, 1.0, rng, spec) ==
          doctest::Approx(c.expected).epsilon(3e-3));
  }
}

TEST_CASE("theta is level-dependent exactly when beta > 0") {
  QuadratureSpec spec;
  RngStream rng(19, 0);
  const SiteConfig sites = pair_sites(1.0);
  const CorrelationModel cm = corr_for(0.5, 1.0);

  const MaxIdProcess p1(RadialMeasure(MeasureFamily::M3, 1.0, 1.0), cm, sites);
  double prev = 0.0;
  for (double z : {0.5, 1.0, 5.0, 20.0}) {
    const double th = theta_level(p1, {0, 1}, z, rng, spec);
    CHECK(th >= 1.0);
    CHECK(th <= 2.0);
    CHECK(th > prev);  // dependence weakens with level
    prev = th;
  }

  const MaxIdProcess p0(RadialMeasure(MeasureFamily::M3, 1.0, 0.0), cm, sites);
  const double t1 = theta_level(p0, {0, 1}, 0.5, rng, spec);
  const double t2 = theta_level(p0, {0, 1}, 50.0, rng, spec);
  CHECK(t1 == doctest::Approx(t2).epsilon(1e-4));
}

TEST_CASE("chi level: proxy identity and exact bounds") {
  QuadratureSpec spec;
  const MaxIdProcess p(RadialMeasure(MeasureFamily::M3, 1.0, 1.0),
                       corr_for(0.6, 1.0), pair_sites(1.0));
  for (double z : {1.0, 5.0}) {
    const DependenceSummary s = chi_level(p, 0, 1, z, spec);
    CHECK(s.chi_exact >= 0.0);
    CHECK(s.chi_exact <= 1.0);
    RngStream rng(4, 0);
    const double theta = theta_level(p, {0, 1}, z, rng, spec);
    CHECK(s.chi_proxy == doctest::Approx(2.0 - theta).epsilon(1e-6));
    // exact identity through the standardized margin:
    // chi(z) = (1 - 2p + p^theta) / (1 - p) with p = exp(-1/z)
    const double pm = std::exp(-1.0 / z);
    const double expected =
        (1.0 - 2.0 * pm + std::pow(pm, theta)) / (1.0 - pm);
    CHECK(s.chi_exact == doctest::Approx(expected).epsilon(1e-5));
  }
  // the proxy is the large-z limit of the exact value
  const DependenceSummary tail = chi_level(p, 0, 1, 200.0, spec);
  CHECK(std::abs(tail.chi_exact - tail.chi_proxy) < 0.01);
}

TEST_CASE("eta coefficient closed form") {
  // {(1+rho)/2}^{beta/(beta+2)}
  const CorrelationModel cm{1.0, 1.0};  // rho(h) = exp(-h)
  const double h = std::log(2.0);       // rho = 0.5
  CHECK(eta_coefficient(cm, 2.0, h) ==
        doctest::Approx(std::pow(0.75, 0.5)).epsilon(1e-12));
  CHECK(eta_coefficient(cm, 0.0, h) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eta_coefficient(cm, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exponent function consistency across dimensions") {
  QuadratureSpec spec;
  const RadialMeasure m(MeasureFamily::M3, 1.0, 1.0);
  RngStream rng(77, 0);

  // D = 1 equals marginal_V
  Eigen::MatrixXd c1 = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd z1(1);
  z1 << 1.7;
  CHECK(exponent_V(m, CorrelationMatrix{c1}, z1, spec, rng).v ==
        doctest::Approx(marginal_V(m, 1.7, spec)).epsilon(1e-8));

  // D = 2 equals the bivariate kernel
  Eigen::MatrixXd c2(2, 2);
  c2 << 1.0, 0.5, 0.5, 1.0;
  Eigen::VectorXd z2(2);
  z2 << 1.0, 2.0;
  CHECK(exponent_V(m, CorrelationMatrix{c2}, z2, spec, rng).v ==
        doctest::Approx(0.4751678993392469).epsilon(1e-7));

  // D = 3 with one level pushed to +inf collapses to the bivariate value
  Eigen::MatrixXd c3(3, 3);
  c3 << 1.0, 0.5, 0.3, 0.5, 1.0, 0.4, 0.3, 0.4, 1.0;
  Eigen::VectorXd z3(3);
  z3 << 1.0, 2.0, 1e9;
  CHECK(exponent_V(m, CorrelationMatrix{c3}, z3, spec, rng).v ==
        doctest::Approx(0.4751678993392469).epsilon(1e-5));

  // bounds: max marginal <= V_3 <= sum of marginals
  z3 << 1.0, 2.0, 1.5;
  const double v3 = exponent_V(m, CorrelationMatrix{c3}, z3, spec, rng).v;
  CHECK(v3 >= marginal_V(m, 1.0, spec) - 1e-9);
  CHECK(v3 <= marginal_V(m, 1.0, spec) + marginal_V(m, 2.0, spec) +
                  marginal_V(m, 1.5, spec) + 1e-9);
}

TEST_CASE("joint exceedance probability on a small grid") {
  QuadratureSpec spec;
  RngStream rng(21, 0);
  const SiteConfig grid = SiteConfig::regular_grid(2, 0.0, 1.0);
  const RadialMeasure m(MeasureFamily::M3, 1.0, 1.0);
  const CorrelationModel cm{0.5, 1.0};

  const ExceedProbResult r = joint_exceed_prob(m, cm, grid, 0.99, rng, spec);
  CHECK(r.prob > 0.01);   // at least the single-site exceedance
  CHECK(r.prob < 0.04);   // at most D * (1 - 0.99)
  CHECK(std::exp(-marginal_V(m, r.level, spec)) ==
        doctest::Approx(0.99).epsilon(1e-6));

  RngStream rng2(21, 0);
  const ExceedProbResult r95 = joint_exceed_prob(m, cm, grid, 0.95, rng2, spec);
  CHECK(r95.prob > r.prob);  // lower level, larger exceedance probability
}

TEST_CASE("finite measure model: cdf and bivariate density") {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.6, 0.6, 1.0;
  const FiniteMeasureSpec spec(12.0, CorrelationMatrix{c});
  RngStream rng(9, 0);

  Eigen::VectorXd z(2);
  z << 1.0, 0.5;
  const double g = finite_model_cdf(spec, z, 1e-7, rng).prob;
  const double phi2 = bivariate_normal_cdf(1.0, 0.5, 0.6);
  CHECK(g == doctest::Approx(std::exp(-12.0 * (1.0 - phi2))).epsilon(1e-9));

  // density from the log-likelihood matches finite differences of the CDF
  const double ll = finite_model_bivariate_loglik(spec, 1.0, 0.5);
  const double h = 1e-4;
  const auto cdf = [&](double a, double b) {
    Eigen::VectorXd zz(2);
    zz << a, b;
    RngStream r2(9, 0);
    return finite_model_cdf(spec, zz, 1e-9, r2).prob;
  };
  const double fd = (cdf(1.0 + h, 0.5 + h) - cdf(1.0 + h, 0.5 - h) -
                     cdf(1.0 - h, 0.5 + h) + cdf(1.0 - h, 0.5 - h)) /
                    (4 * h * h);
  CHECK(std::exp(ll) == doctest::Approx(fd).epsilon(1e-5));
}
