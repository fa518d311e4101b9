#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rupi/copula_pi.hpp"
#include "rupi/serialize.hpp"

using namespace rupi;

namespace {

// ρ = exp(z1), e = exp(0.5·z2) with corr(z1, z2) = r.
CalibrationErrors lognormal_pair(int n, double r, unsigned seed) {
  oracle::GaussianSampler s({{1, r}, {r, 1}}, seed);
  Matrix rho(n, 1), err(n, 1);
  for (int i = 0; i < n; ++i) {
    const auto z = s.draw();
    rho(i, 0) = std::exp(z[0]);
    err(i, 0) = std::exp(0.5 * z[1]);
  }
  return CalibrationErrors::from(rho, err);
}

}  // namespace

TEST(CopulaCalibrate, IndependentColumnsHaveSmallCorrelation) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u;
  const int n = 2000;
  Matrix rho(n, 2), err(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) {
      rho(i, j) = u(gen);
      err(i, j) = u(gen);
    }
  const auto c = copula_calibrate(CalibrationErrors::from(rho, err), 0.05);
  const Matrix& cov = c.joint().covariance();
  const double bound = 3.0 / std::sqrt(static_cast<double>(n));
  for (int a = 0; a < 4; ++a) {
    EXPECT_NEAR(c.joint().mean()(a), 0.0, bound);
    EXPECT_NEAR(cov(a, a), 1.0, bound);
    for (int b = 0; b < a; ++b) EXPECT_LT(std::fabs(cov(a, b) / std::sqrt(cov(a, a) * cov(b, b))), bound);
  }
}

TEST(CopulaCalibrate, ComonotoneColumnsCorrelate) {
  std::mt19937_64 gen(2);
  std::exponential_distribution<double> ed;
  Matrix rho(500, 2);
  for (Eigen::Index i = 0; i < rho.size(); ++i) rho.data()[i] = ed(gen);
  Matrix err = rho.col(1);
  const auto c = copula_calibrate(CalibrationErrors::from(rho, err), 0.05);
  const Matrix& cov = c.joint().covariance();
  EXPECT_GE(cov(1, 2) / std::sqrt(cov(1, 1) * cov(2, 2)), 0.99);
  EXPECT_THROW(copula_calibrate(CalibrationErrors::from(rho.topRows(1), err.topRows(1)), 0.05), DataError);
}

TEST(CopulaWidth, IndependenceGivesConstantUnconditionalWidth) {
  // joint with zero cross-covariance: widths do not depend on ρ
  std::vector<EmpiricalCdf> rho_cdfs{EmpiricalCdf(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5})};
  std::vector<double> errs;
  for (int i = 1; i <= 99; ++i) errs.push_back(i);
  std::vector<EmpiricalCdf> err_cdfs{EmpiricalCdf(errs)};
  const CopulaCalibration c(rho_cdfs, err_cdfs, MultivariateGaussian(Vector::Zero(2), Matrix::Identity(2, 2)), 0.05);
  // ε* = Φ⁻¹(0.95); Φ(ε*) = 0.95; nearest rank ⌈0.95·99⌉ = 95
  const double expected = errs[94];
  for (double r : {0.0, 0.15, 0.33, 10.0}) {
    const std::vector<double> row{r};
    EXPECT_EQ(c.half_width(row)(0), expected);
  }
}

TEST(CopulaWidth, MonotoneInRhoUnderPositiveDependence) {
  const auto cal = lognormal_pair(3000, 0.9, 3);
  const auto c = copula_calibrate(cal, 0.05);
  double prev = -1;
  const double lo = cal.rho.minCoeff(), hi = cal.rho.maxCoeff();
  for (int i = 0; i <= 50; ++i) {
    const std::vector<double> row{lo + (hi - lo) * i / 50.0};
    const double w = c.half_width(row)(0);
    EXPECT_GE(w, prev);
    EXPECT_GE(w, cal.err.minCoeff());
    EXPECT_LE(w, cal.err.maxCoeff());
    prev = w;
  }
  EXPECT_GT(prev, c.half_width(std::vector<double>{lo})(0));
  EXPECT_THROW(c.half_width(std::vector<double>{-1.0}), DataError);
}

TEST(CopulaWidth, RankInvarianceUnderMonotoneTransform) {
  auto cal = lognormal_pair(800, 0.7, 4);
  const auto a = copula_calibrate(cal, 0.1);
  auto f = [](double x) { return x * x * x; };  // strictly increasing map
  Matrix rho_t = cal.rho.unaryExpr(f);
  const auto b = copula_calibrate(CalibrationErrors::from(rho_t, cal.err), 0.1);
  for (int i = 0; i < 50; ++i) {
    const double r = cal.rho(i, 0);
    const std::vector<double> ra{r}, rb{f(r)};
    EXPECT_EQ(a.half_width(ra)(0), b.half_width(rb)(0)) << i;
  }
}

TEST(CopulaScore, DefinitionalValues) {
  const auto cal = lognormal_pair(1000, 0.6, 5);
  const auto c = copula_calibrate(cal, 0.05);
  const std::vector<double> row{cal.rho(3, 0)};
  const auto [mu, sd] = c.conditional(row);
  EXPECT_GT(sd(0), 0.0);
  // an error whose normal score equals ε* scores 1 - α up to ECDF discretisation
  const double w = c.half_width(row)(0);
  const std::vector<double> e{w};
  const double s = c.score(row, e)(0);
  EXPECT_NEAR(s, 0.95, 0.02);
  const double eps_star = mu(0) + norm_quantile(0.95) * sd(0);
  EXPECT_NEAR(norm_cdf((eps_star - mu(0)) / sd(0)), 0.95, 1e-12);
  EXPECT_NEAR(norm_cdf((mu(0) - mu(0)) / sd(0)), 0.5, 1e-15);
}

TEST(CopulaIntervals, ShapeDuplicationAndEmpty) {
  const auto cal = lognormal_pair(500, 0.5, 6);
  const auto c = copula_calibrate(cal, 0.05);
  Matrix rho(3, 1);
  rho << 1.0, 1.0, 2.0;
  const Matrix pred = Matrix::Constant(3, 1, 4.0);
  const auto b = c.intervals(pred, rho);
  EXPECT_EQ(b.method, "copula");
  EXPECT_EQ(b.lower(0, 0), b.lower(1, 0));
  EXPECT_EQ(b.upper(0, 0) - 4.0, 4.0 - b.lower(0, 0));
  EXPECT_EQ(c.intervals(Matrix(0, 1), Matrix(0, 1)).rows(), 0);
  EXPECT_THROW(c.intervals(Matrix::Zero(2, 1), Matrix::Zero(3, 1)), DataError);
}

TEST(CopulaIntervals, PoolingAveragesWindowSteps) {
  const std::vector<double> row{1, 2, 3, 10, 20, 30};
  EXPECT_EQ(CopulaCalibration::pool_groups(row, 3), (std::vector<double>{2, 20}));
  std::mt19937_64 gen(8);
  std::exponential_distribution<double> ed;
  Matrix rho(200, 6), err(200, 2);
  for (Eigen::Index i = 0; i < rho.size(); ++i) rho.data()[i] = ed(gen);
  for (Eigen::Index i = 0; i < err.size(); ++i) err.data()[i] = ed(gen);
  CopulaOptions opts;
  opts.pool_window = 3;
  const auto c = copula_calibrate(CalibrationErrors::from(rho, err), 0.05, opts);
  EXPECT_EQ(c.rho_dim(), 2u);
  EXPECT_EQ(c.input_dim(), 6u);
  EXPECT_EQ(c.half_width(row).size(), 2);
  opts.pool_window = 4;
  EXPECT_THROW(copula_calibrate(CalibrationErrors::from(rho, err), 0.05, opts), ConfigError);
}

TEST(CopulaJson, RoundTripGivesIdenticalWidths) {
  const auto cal = lognormal_pair(300, 0.8, 7);
  const auto c = copula_calibrate(cal, 0.1);
  const auto back = io::copula_from_json(nlohmann::json::parse(io::to_json(c).dump()));
  for (int i = 0; i < 30; ++i) {
    const std::vector<double> row{cal.rho(i, 0) * 1.1};
    EXPECT_EQ(c.half_width(row)(0), back.half_width(row)(0));
  }
}
