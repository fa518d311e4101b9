#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rupi/conformal.hpp"
#include "rupi/serialize.hpp"

using namespace rupi;

namespace {

std::vector<double> iota_scores(int m) {
  std::vector<double> v(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  return v;
}

Matrix column_of(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST(AdjustedQuantile, RankRuleExamples) {
  // ⌈20·0.95⌉ = 19 → max of 19
  auto s19 = iota_scores(19);
  std::shuffle(s19.begin(), s19.end(), std::mt19937(1));
  EXPECT_EQ(adjusted_quantile(s19, 0.05), 19.0);
  // ⌈100·0.95⌉ = 95
  EXPECT_EQ(adjusted_quantile(iota_scores(99), 0.05), 95.0);
  // ⌈11·0.95⌉ = 11 > 10
  EXPECT_TRUE(std::isinf(adjusted_quantile(iota_scores(10), 0.05)));
  EXPECT_THROW(adjusted_quantile(std::vector<double>{}, 0.05), DataError);
  EXPECT_THROW(adjusted_quantile(iota_scores(5), 0.0), ConfigError);
  EXPECT_THROW(adjusted_quantile(iota_scores(5), 1.0), ConfigError);
}

TEST(AdjustedQuantile, MatchesIntegerOracleAcrossSizes) {
  std::mt19937_64 gen(2);
  std::exponential_distribution<double> ed;
  for (long a_millis : {10L, 50L, 100L, 200L, 500L}) {
    for (int m = 1; m <= 300; ++m) {
      std::vector<double> s(static_cast<std::size_t>(m));
      for (auto& v : s) v = ed(gen);
      const double got = adjusted_quantile(s, static_cast<double>(a_millis) / 1000.0);
      const double want = oracle::conformal_quantile(s, a_millis);
      if (std::isinf(want)) {
        EXPECT_TRUE(std::isinf(got)) << m << " " << a_millis;
      } else {
        EXPECT_EQ(got, want) << m << " " << a_millis;
      }
    }
  }
}

TEST(SplitCp, CalibrationExamples) {
  const auto zero = split_cp_calibrate(Matrix::Zero(30, 2), 0.05);
  EXPECT_EQ(zero.q_hat, Vector::Zero(2));
  const auto b = split_cp_intervals(zero, Matrix::Constant(3, 2, 1.5));
  EXPECT_EQ(b.lower, b.upper);

  const auto cal = split_cp_calibrate(column_of(iota_scores(99)), 0.05);
  EXPECT_EQ(cal.q_hat(0), 95.0);
  EXPECT_EQ(cal.n_cal, 99u);

  auto shuffled = iota_scores(99);
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(4));
  EXPECT_EQ(split_cp_calibrate(column_of(shuffled), 0.05).q_hat(0), 95.0);
}

TEST(SplitCp, IntervalsBroadcastWidth) {
  SplitCpCalibration cal;
  cal.q_hat = Vector::Constant(1, 2.0);
  cal.alpha = 0.1;
  const auto b = split_cp_intervals(cal, Matrix::Constant(4, 1, 10.0));
  EXPECT_EQ(b.lower(0, 0), 8.0);
  EXPECT_EQ(b.upper(0, 0), 12.0);
  EXPECT_EQ(b.method, "split_cp");
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(b.upper(i, 0) - b.lower(i, 0), 4.0);
  EXPECT_THROW(split_cp_intervals(cal, Matrix::Zero(2, 3)), DataError);
}

TEST(SplitCp, OutputPermutationAndAlphaMonotonicity) {
  std::mt19937_64 gen(3);
  std::gamma_distribution<double> gd(2.0, 1.0);
  Matrix e(200, 3);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = gd(gen);
  const auto a = split_cp_calibrate(e, 0.1);
  Matrix ep(200, 3);
  ep << e.col(2), e.col(0), e.col(1);
  const auto b = split_cp_calibrate(ep, 0.1);
  EXPECT_EQ(b.q_hat(0), a.q_hat(2));
  EXPECT_EQ(b.q_hat(1), a.q_hat(0));
  double prev = 0.0;
  for (double alpha = 0.5; alpha >= 0.01; alpha -= 0.01) {
    const double q = split_cp_calibrate(e, alpha).q_hat(0);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(NormalizedCp, UnitSigmaReducesToSplit) {
  std::mt19937_64 gen(5);
  std::exponential_distribution<double> ed;
  Matrix e(150, 2);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = ed(gen);
  const std::vector<double> ones(150, 1.0);
  const auto n = normalized_cp_calibrate(e, ones, 0.05);
  const auto s = split_cp_calibrate(e, 0.05);
  EXPECT_EQ(n.q_hat, s.q_hat);
  const Matrix pred = Matrix::Random(7, 2);
  const std::vector<double> ones7(7, 1.0);
  EXPECT_EQ(normalized_cp_intervals(n, pred, ones7).lower, split_cp_intervals(s, pred).lower);
}

TEST(NormalizedCp, ProportionalErrorsAndScaleInvariance) {
  std::vector<double> sigma(50);
  Matrix e(50, 1);
  for (int i = 0; i < 50; ++i) {
    sigma[static_cast<std::size_t>(i)] = 0.5 + 0.1 * i;
    e(i, 0) = 2.5 * sigma[static_cast<std::size_t>(i)];
  }
  const auto cal = normalized_cp_calibrate(e, sigma, 0.1);
  EXPECT_NEAR(cal.q_hat(0), 2.5, 1e-14);

  std::vector<double> scaled = sigma;
  for (auto& s : scaled) s *= 4.0;
  const auto cal4 = normalized_cp_calibrate(e, scaled, 0.1);
  EXPECT_NEAR(cal4.q_hat(0), cal.q_hat(0) / 4.0, 1e-14);
  const std::vector<double> test_sigma{1.0, 2.0};
  const std::vector<double> test_scaled{4.0, 8.0};
  const Matrix pred = Matrix::Zero(2, 1);
  const auto w1 = normalized_cp_intervals(cal, pred, test_sigma);
  const auto w4 = normalized_cp_intervals(cal4, pred, test_scaled);
  EXPECT_NEAR(w1.upper(1, 0), w4.upper(1, 0), 1e-13);
}

TEST(NormalizedCp, HandCaseAndLinearity) {
  NormalizedCpCalibration cal;
  cal.q_hat = Vector::Constant(1, 2.0);
  const std::vector<double> sigma{1.0, 3.0};
  const auto b = normalized_cp_intervals(cal, Matrix::Zero(2, 1), sigma);
  EXPECT_EQ(b.lower(0, 0), -2.0);
  EXPECT_EQ(b.upper(0, 0), 2.0);
  EXPECT_EQ(b.lower(1, 0), -6.0);
  EXPECT_EQ(b.upper(1, 0), 6.0);

  const std::vector<double> doubled{2.0, 3.0};
  const auto d = normalized_cp_intervals(cal, Matrix::Zero(2, 1), doubled);
  EXPECT_EQ(d.upper(0, 0), 2 * b.upper(0, 0));

  double prev = -1;
  for (double s = 0.1; s < 5; s += 0.1) {
    const std::vector<double> one{s};
    const double w = normalized_cp_intervals(cal, Matrix::Zero(1, 1), one).upper(0, 0);
    EXPECT_GT(w, prev);
    prev = w;
  }
}

TEST(NormalizedCp, RejectsNonPositiveSigma) {
  const std::vector<double> bad{1.0, 0.0};
  EXPECT_THROW(normalized_cp_calibrate(Matrix::Ones(2, 1), bad, 0.05), DataError);
  const std::vector<double> neg{-1.0};
  NormalizedCpCalibration cal;
  cal.q_hat = Vector::Ones(1);
  EXPECT_THROW(normalized_cp_intervals(cal, Matrix::Zero(1, 1), neg), DataError);
}

TEST(CalibrationJson, RoundTripKeepsInfinity) {
  const auto cal = split_cp_calibrate(column_of(iota_scores(10)), 0.05);
  ASSERT_TRUE(std::isinf(cal.q_hat(0)));
  const auto j = nlohmann::json::parse(io::to_json(cal).dump());
  EXPECT_TRUE(j["q_hat"][0].is_null());
  const auto back = io::cp_from_json<SplitCpCalibration>(j);
  EXPECT_TRUE(std::isinf(back.q_hat(0)));
  EXPECT_EQ(back.n_cal, 10u);
  EXPECT_EQ(back.alpha, 0.05);
}
