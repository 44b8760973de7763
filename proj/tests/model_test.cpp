#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sbanm/error.hpp"
#include "sbanm/model.hpp"

namespace sbanm {
namespace {

TEST(Psi, TimesQIsQMinusOne) {
  for (std::size_t Q = 1; Q <= 50; ++Q) {
    EXPECT_NEAR(psi(Q) * static_cast<double>(Q), static_cast<double>(Q) - 1.0, 1e-12) << Q;
  }
  EXPECT_THROW(psi(0), UsageError);
}

TEST(ParamCount, Values) {
  EXPECT_EQ(param_count(3, 4), 33u);
  EXPECT_EQ(param_count(2, 3), 12u + 2u + 4u);
  EXPECT_EQ(param_count(1, 1), 4u);
}

TEST(Covariance, Equicorrelation) {
  const std::vector<double> var = {4.0, 9.0, 1.0};
  const Eigen::MatrixXd c = build_covariance(var, 0.5);
  EXPECT_DOUBLE_EQ(c(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(c(1, 1), 9.0);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.5 * 2.0 * 3.0);
  EXPECT_DOUBLE_EQ(c(2, 1), 0.5 * 3.0 * 1.0);
  EXPECT_EQ(c, c.transpose());
}

TEST(Covariance, RejectsCorrelationOutsideInterval) {
  const std::vector<double> var = {1.0, 1.0, 1.0};
  EXPECT_THROW(build_covariance(var, -0.5), NumericalError);
  EXPECT_THROW(build_covariance(var, 1.0), NumericalError);
  EXPECT_NO_THROW(build_covariance(var, -0.49));
}

TEST(ClampRho, StaysInsideInterval) {
  EXPECT_DOUBLE_EQ(clamp_rho(2.0, 3), 1.0 - kRhoMargin);
  EXPECT_DOUBLE_EQ(clamp_rho(-2.0, 3), -0.5 + kRhoMargin);
  EXPECT_DOUBLE_EQ(clamp_rho(-2.0, 2), -1.0 + kRhoMargin);
  EXPECT_DOUBLE_EQ(clamp_rho(0.3, 1), 0.0);
  EXPECT_DOUBLE_EQ(clamp_rho(0.3, 4), 0.3);
  EXPECT_DOUBLE_EQ(rho_lower_bound(5), -0.25);
}

TEST(LogDensity, MatchesDenseOracle) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (std::size_t K = 1; K <= 4; ++K) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> x(K), mu(K), var(K);
      for (std::size_t k = 0; k < K; ++k) {
        x[k] = 3.0 * z(rng);
        mu[k] = z(rng);
        var[k] = u(rng);
      }
      const double rho = K > 1 ? clamp_rho(0.9 * z(rng), K) * 0.9 : 0.0;
      const Eigen::MatrixXd cov = build_covariance(var, rho);
      const double want = oracle::mvn_logpdf(x, mu, cov);
      EXPECT_NEAR(log_density(x, mu, cov), want, 1e-10);
      GaussianKernel kern(mu, cov);
      EXPECT_NEAR(kern.log_density(x), want, 1e-10);
    }
  }
}

TEST(LogDensity, StandardNormalAtZero) {
  const std::vector<double> x = {0.0};
  const std::vector<double> mu = {0.0};
  EXPECT_NEAR(log_density(x, mu, Eigen::MatrixXd::Identity(1, 1)), -0.5 * std::log(2.0 * M_PI), 1e-15);
}

TEST(LogDensity, RejectsIndefiniteCovariance) {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 2.0, 2.0, 1.0;
  const std::vector<double> x = {0.0, 0.0};
  EXPECT_THROW(log_density(x, x, cov), NumericalError);
}

TEST(ModelParams, ValidateCatchesShapeErrors) {
  ModelParams p;
  p.Q = 2;
  p.psi = 0.5;
  p.noise = {{0.0, 0.0}, {1.0, 1.0}};
  p.blocks = {noise_as_block(p.noise), {{1.0, 1.0}, {1.0, 1.0}, 0.2}};
  p.alpha = {0.5, 0.5};
  EXPECT_NO_THROW(p.validate());
  p.alpha = {0.5, 0.6};
  EXPECT_THROW(p.validate(), DataError);
  p.alpha = {0.5, 0.5};
  p.noise_block = 2;
  EXPECT_THROW(p.validate(), DataError);
  p.noise_block = 0;
  p.blocks[1].var = {1.0};
  EXPECT_THROW(p.validate(), DataError);
}

}  // namespace
}  // namespace sbanm
