#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "maxid/errors.hpp"
#include "maxid/margins.hpp"
#include "maxid/rng.hpp"

using namespace maxid;

namespace {

double gev_sample(const GevMargin& m, RngStream& rng) {
  return gev_quantile(m, rng.uniform());
}

}  // namespace

TEST_CASE("gev cdf / quantile closed forms and round trips") {
  const GevMargin frechet_like{0.0, 1.0, 0.5, 1.0};
  // xi > 0: G(z) = exp(-(1 + xi (z-mu)/sigma)^(-1/xi))
  CHECK(gev_cdf(frechet_like, 1.0) ==
        doctest::Approx(std::exp(-std::pow(1.5, -2.0))).epsilon(1e-14));

  const GevMargin gumbel{1.0, 2.0, 0.0, 1.0};
  CHECK(gev_cdf(gumbel, 3.0) ==
        doctest::Approx(std::exp(-std::exp(-1.0))).epsilon(1e-14));

  for (const auto& m :
       {GevMargin{0.0, 1.0, 0.3, 1.0}, GevMargin{2.0, 0.5, -0.2, 1.0},
        GevMargin{-1.0, 3.0, 0.0, 1.0}}) {
    for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
      CHECK(gev_cdf(m, gev_quantile(m, p)) == doctest::Approx(p).epsilon(1e-10));
    }
  }
}

TEST_CASE("gev logpdf integrates consistently with the cdf") {
  const GevMargin m{0.5, 1.2, 0.15, 1.0};
  // numeric derivative of the CDF equals the density
  for (double z : {0.0, 0.7, 2.0, 6.0}) {
    const double h = 1e-6;
    const double fd = (gev_cdf(m, z + h) - gev_cdf(m, z - h)) / (2 * h);
    CHECK(std::exp(gev_logpdf(m, z)) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("rescaling identity G' = G^m pointwise") {
  RngStream rng(11, 0);
  for (int trial = 0; trial < 50; ++trial) {
    GevMargin m;
    m.mu = 4.0 * rng.uniform() - 2.0;
    m.sigma = 0.2 + 3.0 * rng.uniform();
    m.xi = 0.8 * rng.uniform() - 0.4;
    m.theta = 0.2 + 0.8 * rng.uniform();
    const double bk = 1.0 + 364.0 * rng.uniform();
    const double factor = bk * m.theta;
    const GevMargin scaled = rescale_gev(m, factor);
    for (double z : {m.mu + 0.5 * m.sigma, m.mu + 2.0 * m.sigma,
                     m.mu + 8.0 * m.sigma}) {
      const double lhs = gev_cdf(scaled, z);
      const double rhs = std::pow(gev_cdf(m, z), factor);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("rescale semigroup property") {
  const GevMargin m{1.0, 0.8, 0.12, 1.0};
  const GevMargin ab = rescale_gev(rescale_gev(m, 7.0), 4.0);
  const GevMargin direct = rescale_gev(m, 28.0);
  CHECK(ab.mu == doctest::Approx(direct.mu).epsilon(1e-12));
  CHECK(ab.sigma == doctest::Approx(direct.sigma).epsilon(1e-12));
  CHECK(ab.xi == doctest::Approx(direct.xi).epsilon(1e-12));
}

TEST_CASE("frechet transform round trips and support guard") {
  const GevMargin m{0.0, 1.0, 0.2, 0.7};
  for (double z : {0.5, 1.5, 4.0}) {
    const double u = to_frechet(z, m, 7.0);
    CHECK(u > 0.0);
    CHECK(from_frechet(u, m, 7.0) == doctest::Approx(z).epsilon(1e-9));
  }
  // below the lower endpoint the CDF is 0 and the transform must refuse
  const GevMargin heavy{0.0, 1.0, 0.5, 1.0};
  CHECK_THROWS_AS(to_frechet(-10.0, heavy, 1.0), OutOfSupport);
}

TEST_CASE("joint fit recovers a known margin across scales") {
  const GevMargin truth{2.0, 1.0, 0.1, 0.6};
  const BlockSpec blocks = BlockSpec::standard();
  RngStream rng(2024, 3);

  std::vector<std::vector<double>> series(blocks.sizes.size());
  const std::vector<int> counts = {2000, 900, 500, 200};
  for (size_t k = 0; k < blocks.sizes.size(); ++k) {
    const GevMargin mk = rescale_gev(truth, blocks.sizes[k] * truth.theta);
    for (int i = 0; i < counts[k]; ++i) {
      series[k].push_back(gev_sample(mk, rng));
    }
  }

  const GevFitResult fit = fit_gev_joint(series, blocks);
  CHECK(fit.converged);
  CHECK(fit.theta_identifiable);
  CHECK(fit.margin.mu == doctest::Approx(truth.mu).epsilon(0.08));
  CHECK(fit.margin.sigma == doctest::Approx(truth.sigma).epsilon(0.12));
  CHECK(std::abs(fit.margin.xi - truth.xi) < 0.06);
  CHECK(std::abs(fit.margin.theta - truth.theta) < 0.15);

  // optimizer sanity: the estimate is at least as good as the truth
  const auto loglik = [&](const GevMargin& m) {
    double ll = 0.0;
    for (size_t k = 0; k < series.size(); ++k) {
      const GevMargin mk = rescale_gev(m, blocks.sizes[k] * m.theta);
      for (double z : series[k]) ll += gev_logpdf(mk, z);
    }
    return ll;
  };
  CHECK(fit.loglik >= loglik(truth) - 1e-6);
  CHECK(fit.loglik == doctest::Approx(loglik(fit.margin)).epsilon(1e-9));
}

TEST_CASE("single-scale fit flags theta as unidentifiable") {
  RngStream rng(8, 0);
  std::vector<std::vector<double>> series(1);
  const GevMargin truth{0.0, 1.0, 0.05, 1.0};
  for (int i = 0; i < 800; ++i) series[0].push_back(gev_sample(truth, rng));
  BlockSpec blocks;
  blocks.labels = {"only"};
  blocks.sizes = {1.0};
  const GevFitResult fit = fit_gev_joint(series, blocks);
  CHECK_FALSE(fit.theta_identifiable);
  CHECK(fit.margin.theta == 1.0);
}

TEST_CASE("degenerate series is rejected") {
  std::vector<std::vector<double>> series = {{3.0, 3.0, 3.0, 3.0}};
  BlockSpec blocks;
  blocks.labels = {"b"};
  blocks.sizes = {1.0};
  CHECK_THROWS_AS(fit_gev_joint(series, blocks), DegenerateSeries);
}

TEST_CASE("empirical frechet transform: ranks, ties, margins") {
  Eigen::MatrixXd data(5, 2);
  data << 3.0, 1.0,
          1.0, 2.0,
          4.0, 2.0,
          1.5, 2.0,
          2.0, 5.0;
  const Eigen::MatrixXd u = empirical_to_frechet(data);
  // column 0 has distinct values: rank r -> -1/log(r/6)
  const auto frech = [](double rank) { return -1.0 / std::log(rank / 6.0); };
  CHECK(u(0, 0) == doctest::Approx(frech(4)).epsilon(1e-12));
  CHECK(u(1, 0) == doctest::Approx(frech(1)).epsilon(1e-12));
  CHECK(u(2, 0) == doctest::Approx(frech(5)).epsilon(1e-12));
  // column 1: the three tied 2.0 values share the average rank 3
  CHECK(u(1, 1) == doctest::Approx(frech(3)).epsilon(1e-12));
  CHECK(u(2, 1) == doctest::Approx(frech(3)).epsilon(1e-12));
  CHECK(u(3, 1) == doctest::Approx(frech(3)).epsilon(1e-12));
  CHECK(u(4, 1) == doctest::Approx(frech(5)).epsilon(1e-12));
}
