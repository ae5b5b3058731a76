#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maxid/errors.hpp"
#include "maxid/model.hpp"
#include "maxid/simulate.hpp"

using namespace maxid;

namespace {

MaxIdProcess small_process(double lambda = 0.8, double beta = 1.0) {
  Eigen::MatrixX2d xy(3, 2);
  xy << 0.0, 0.0, 0.6, 0.0, 0.0, 1.1;
  return MaxIdProcess(RadialMeasure(MeasureFamily::M3, 1.0, beta),
                      CorrelationModel{lambda, 1.0},
                      SiteConfig({"a", "b", "c"}, xy));
}

// fraction of rows with all entries <= z
double empirical_joint_cdf(const Eigen::MatrixXd& x, double z) {
  int count = 0;
  for (int i = 0; i < x.rows(); ++i) {
    if ((x.row(i).array() <= z).all()) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("exact simulation: shape, positivity, determinism") {
  const MaxIdProcess p = small_process();
  SimulationConfig cfg;
  cfg.n_replicates = 40;
  cfg.rng = RngStream(101, 0);
  const Eigen::MatrixXd a = simulate_exact(p, cfg);
  CHECK(a.rows() == 40);
  CHECK(a.cols() == 3);
  CHECK((a.array() > 0.0).all());
  CHECK(a.allFinite());

  // same seed reproduces exactly; a different seed does not
  const Eigen::MatrixXd b = simulate_exact(p, cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  cfg.rng = RngStream(102, 0);
  const Eigen::MatrixXd c = simulate_exact(p, cfg);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("exact simulation: per-replicate streams make prefixes agree") {
  const MaxIdProcess p = small_process();
  SimulationConfig cfg;
  cfg.rng = RngStream(7, 3);
  cfg.n_replicates = 25;
  const Eigen::MatrixXd big = simulate_exact(p, cfg);
  cfg.n_replicates = 10;
  const Eigen::MatrixXd small = simulate_exact(p, cfg);
  CHECK((big.topRows(10) - small).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact simulation: stopping rule is inert") {
  // generating extra radial points below the stopping threshold must not
  // change any realized maximum
  const MaxIdProcess p = small_process();
  SimulationConfig cfg;
  cfg.rng = RngStream(55, 0);
  cfg.n_replicates = 30;
  const Eigen::MatrixXd base = simulate_exact(p, cfg);
  cfg.stop_factor = 0.2;
  const Eigen::MatrixXd extra = simulate_exact(p, cfg);
  CHECK((base - extra).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact simulation: prebuilt table matches internal path") {
  const MaxIdProcess p = small_process();
  const EllipticalRadialTable table(p.measure(), 3);
  SimulationConfig cfg;
  cfg.rng = RngStream(9, 1);
  cfg.n_replicates = 15;
  const Eigen::MatrixXd a = simulate_exact(p, cfg);
  const Eigen::MatrixXd b = simulate_exact(p, cfg, table);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("exact simulation matches the exponent function") {
  // empirical Pr(Z <= z 1) against exp(-V) at several levels
  const MaxIdProcess p = small_process();
  QuadratureSpec spec;
  SimulationConfig cfg;
  cfg.n_replicates = 6000;
  cfg.rng = RngStream(202, 0);
  const Eigen::MatrixXd x = simulate_exact(p, cfg);
  RngStream vr(203, 0);
  for (double z : {0.8, 1.5, 3.0}) {
    const Eigen::VectorXd zz = Eigen::VectorXd::Constant(3, z);
    const double truth = std::exp(-exponent_V(p, zz, spec, vr).v);
    const double emp = empirical_joint_cdf(x, z);
    const double se = std::sqrt(truth * (1.0 - truth) / cfg.n_replicates);
    CHECK(std::abs(emp - truth) < 4.5 * se + 1e-3);
  }
}

TEST_CASE("truncated simulation agrees with exact in distribution") {
  const MaxIdProcess p = small_process();
  QuadratureSpec spec;
  SimulationConfig cfg;
  cfg.mode = SimulationMode::epsilon_truncated;
  // points below epsilon can exceed z ~ 1 only with a >250-sigma Gaussian
  // draw, so the truncation bias is far below the Monte-Carlo noise
  cfg.epsilon = 4e-3;
  cfg.n_replicates = 4000;
  cfg.rng = RngStream(404, 0);
  const Eigen::MatrixXd x = simulate_truncated(p, cfg);
  CHECK(x.rows() == 4000);
  CHECK(x.cols() == 3);
  RngStream vr(405, 0);
  for (double z : {1.0, 2.5}) {
    const Eigen::VectorXd zz = Eigen::VectorXd::Constant(3, z);
    const double truth = std::exp(-exponent_V(p, zz, spec, vr).v);
    const double emp = empirical_joint_cdf(x, z);
    const double se = std::sqrt(truth * (1.0 - truth) / cfg.n_replicates);
    CHECK(std::abs(emp - truth) < 4.5 * se + 2e-3);
  }
}

TEST_CASE("truncated simulation is deterministic given the stream") {
  const MaxIdProcess p = small_process();
  SimulationConfig cfg;
  cfg.mode = SimulationMode::epsilon_truncated;
  cfg.epsilon = 1e-4;
  cfg.n_replicates = 20;
  cfg.rng = RngStream(11, 0);
  const Eigen::MatrixXd a = simulate_truncated(p, cfg);
  const Eigen::MatrixXd b = simulate_truncated(p, cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("finite-measure simulation: boundary frequency is exp(-c)") {
  Eigen::MatrixXd cm(2, 2);
  cm << 1.0, 0.4, 0.4, 1.0;
  const FiniteMeasureSpec spec(2.0, CorrelationMatrix(cm), 10.0, true);
  RngStream rng(77, 0);
  const int n = 20000;
  const FiniteSimResult r = simulate_finite(spec, n, rng);
  CHECK(static_cast<int>(r.boundary.size()) == n);
  CHECK(r.values.rows() == n);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    if (r.boundary[i]) {
      ++hits;
      CHECK(r.values(i, 0) == -std::numeric_limits<double>::infinity());
    } else {
      CHECK(std::isfinite(r.values(i, 0)));
      CHECK(std::isfinite(r.values(i, 1)));
    }
  }
  const double truth = std::exp(-2.0);
  const double se = std::sqrt(truth * (1.0 - truth) / n);
  CHECK(std::abs(static_cast<double>(hits) / n - truth) < 4.5 * se);
}

TEST_CASE("finite-measure simulation matches its cdf") {
  Eigen::MatrixXd cm(2, 2);
  cm << 1.0, 0.6, 0.6, 1.0;
  const FiniteMeasureSpec spec(3.0, CorrelationMatrix(cm), 10.0, true);
  RngStream rng(78, 0);
  const int n = 20000;
  const FiniteSimResult r = simulate_finite(spec, n, rng);
  RngStream cr(79, 0);
  for (double z : {-0.5, 0.5, 1.5}) {
    const Eigen::VectorXd zz = Eigen::VectorXd::Constant(2, z);
    const double truth = finite_model_cdf(spec, zz, 1e-6, cr).prob;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (r.boundary[i] || (r.values.row(i).array() <= z).all()) ++count;
    }
    const double emp = static_cast<double>(count) / n;
    const double se = std::sqrt(truth * (1.0 - truth) / n);
    CHECK(std::abs(emp - truth) < 4.5 * se + 1e-3);
  }
}

TEST_CASE("monte-carlo exceedance estimate brackets the quadrature value") {
  const RadialMeasure m(MeasureFamily::M3, 1.0, 1.0);
  const CorrelationModel cm{0.8, 1.0};
  const SiteConfig grid = SiteConfig::regular_grid(2, 0.0, 1.0);
  RngStream qr(301, 0);
  const ExceedProbResult exact =
      joint_exceed_prob(m, cm, grid, 0.95, qr, QuadratureSpec{});
  RngStream mr(302, 0);
  const McEstimate mc = estimate_p_mc(m, cm, grid, 0.95, 8000, mr);
  CHECK(mc.level == doctest::Approx(exact.level).epsilon(1e-6));
  CHECK(mc.std_error > 0.0);
  CHECK(std::abs(mc.prob - exact.prob) <
        4.5 * mc.std_error + exact.error_estimate + 1e-3);
}
