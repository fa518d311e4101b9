#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rupi/conformal.hpp"
#include "rupi/knn_pi.hpp"
#include "rupi/serialize.hpp"

using namespace rupi;

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t dim : {1u, 2u, 5u, 20u}) {
    std::vector<double> pts(500 * dim);
    for (auto& v : pts) v = u(gen);
    const KdTree<double> tree(pts, dim);
    for (int q = 0; q < 50; ++q) {
      std::vector<double> query(dim);
      for (auto& v : query) v = u(gen);
      for (std::size_t k : {1u, 7u, 40u, 500u, 600u}) {
        const auto got = tree.knn(query, k);
        const auto want = oracle::brute_knn(pts, dim, query, k);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          EXPECT_EQ(got[i].index, want[i].second);
          EXPECT_EQ(got[i].dist2, want[i].first);
        }
      }
    }
  }
}

TEST(KdTree, TiesBreakOnLowestIndexAndDuplicatesSurvive) {
  // integer lattice with many equal distances plus duplicated points
  std::vector<double> pts;
  for (int x = 0; x < 6; ++x)
    for (int y = 0; y < 6; ++y) {
      pts.push_back(x);
      pts.push_back(y);
    }
  for (int i = 0; i < 5; ++i) {
    pts.push_back(2);
    pts.push_back(2);
  }
  const KdTree<double> tree(pts, 2);
  for (double qx = 0; qx <= 5; qx += 0.5)
    for (double qy = 0; qy <= 5; qy += 0.5) {
      const std::vector<double> q{qx, qy};
      const auto got = tree.knn(q, 9);
      const auto want = oracle::brute_knn(pts, 2, q, 9);
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].index, want[i].second);
    }
  const auto near = tree.knn(std::vector<double>{2, 2}, 6);
  std::size_t zero = 0;
  for (const auto& n : near) zero += n.dist2 == 0.0;
  EXPECT_EQ(zero, 6u);
}

TEST(ChooseK, RuleExamples) {
  EXPECT_GE(choose_k(1244, 0.05), 39u);
  EXPECT_EQ(choose_k(1244, 0.05), 39u);
  EXPECT_EQ(choose_k(8765, 0.05), 94u);
  EXPECT_EQ(choose_k(1244, 0.05, 80), 80u);
  EXPECT_EQ(choose_k(4, 0.05), 4u);
  EXPECT_EQ(choose_k(1, 0.05), 1u);
  EXPECT_EQ(choose_k(1521, 0.05), 39u);
  EXPECT_THROW(choose_k(10, 0.05, 11), ConfigError);
  EXPECT_THROW(choose_k(10, 0.05, 0), ConfigError);
  EXPECT_EQ(choose_k(1560, 0.05), 39u);  // √1560 = 39.497
  EXPECT_EQ(choose_k(1600, 0.05), 40u);
}

TEST(KnnWidth, RankArithmetic) {
  EXPECT_EQ(KnnCalibration::quantile_rank(39, 0.05), 38u);
  EXPECT_EQ(KnnCalibration::quantile_rank(19, 0.05), 19u);
  EXPECT_EQ(KnnCalibration::quantile_rank(10, 0.05), 10u);
  EXPECT_EQ(KnnCalibration::quantile_rank(1, 0.05), 1u);

  Matrix rho(39, 1), err(39, 1);
  for (int i = 0; i < 39; ++i) {
    rho(i, 0) = i;
    err(i, 0) = 39 - i;  // ascending ranks are 1..39
  }
  const KnnCalibration c(rho, err, 0.05, {39, false});
  EXPECT_EQ(c.half_width(std::vector<double>{0.0})(0), 38.0);
  const KnnCalibration c19(rho, err, 0.05, {19, false});
  // neighbours of 0 are rows 0..18 with errors 39..21; max is 39
  EXPECT_EQ(c19.half_width(std::vector<double>{0.0})(0), 39.0);

  const KnnCalibration flat(rho, Matrix::Constant(39, 2, 1.25), 0.05);
  EXPECT_EQ(flat.half_width(std::vector<double>{17.2}), Vector::Constant(2, 1.25));
}

TEST(KnnWidth, WholeSetNeighbourhoodEqualsSplitCp) {
  std::mt19937_64 gen(3);
  std::exponential_distribution<double> ed;
  Matrix rho(200, 4), err(200, 3);
  for (Eigen::Index i = 0; i < rho.size(); ++i) rho.data()[i] = ed(gen);
  for (Eigen::Index i = 0; i < err.size(); ++i) err.data()[i] = ed(gen);
  const auto cp = split_cp_calibrate(err, 0.05);
  const KnnCalibration knn(rho, err, 0.05, {200, false});
  for (Eigen::Index i = 0; i < 200; ++i) {
    std::vector<double> q(4);
    for (int j = 0; j < 4; ++j) q[static_cast<std::size_t>(j)] = rho(i, j);
    EXPECT_EQ(knn.half_width(q), cp.q_hat);
  }
}

TEST(KnnWidth, AlphaMonotoneAndSingleRow) {
  std::mt19937_64 gen(4);
  std::exponential_distribution<double> ed;
  Matrix rho(300, 2), err(300, 1);
  for (Eigen::Index i = 0; i < rho.size(); ++i) rho.data()[i] = ed(gen);
  for (Eigen::Index i = 0; i < err.size(); ++i) err.data()[i] = ed(gen);
  const std::vector<double> q{0.5, 0.7};
  double prev = 1e300;
  for (double alpha = 0.01; alpha < 0.5; alpha += 0.01) {
    const double w = KnnCalibration(rho, err, alpha, {40, false}).half_width(q)(0);
    EXPECT_LE(w, prev);
    prev = w;
  }
  const KnnCalibration one(rho.topRows(1), err.topRows(1), 0.05);
  EXPECT_EQ(one.k(), 1u);
  EXPECT_EQ(one.half_width(q)(0), err(0, 0));
}

TEST(KnnWidth, LocalityOnHeteroscedasticData) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> nd;
  const int n = 2000;
  Matrix rho(n, 2), err(n, 1);
  for (int i = 0; i < n; ++i) {
    rho(i, 0) = u(gen);
    rho(i, 1) = u(gen);
    err(i, 0) = std::fabs(nd(gen)) * (0.1 + rho.row(i).norm());
  }
  const KnnCalibration c(rho, err, 0.05);
  const double low = c.half_width(std::vector<double>{0.05, 0.05})(0);
  const double high = c.half_width(std::vector<double>{0.95, 0.95})(0);
  EXPECT_GT(high, 2.0 * low);
}

TEST(KnnStandardize, ScalesFeatures) {
  Matrix rho(4, 2);
  rho << 0, 0, 1, 1000, 2, 2000, 3, 3000;
  Matrix err(4, 1);
  err << 1, 2, 3, 4;
  const KnnCalibration raw(rho, err, 0.5, {1, false});
  const KnnCalibration std_(rho, err, 0.5, {1, true});
  // the second feature dominates raw distances until both are rescaled
  const std::vector<double> q{0.2, 1000.0};
  EXPECT_EQ(raw.neighbors(q).front().index, 1u);
  EXPECT_EQ(std_.neighbors(q).front().index, 1u);
  const std::vector<double> q2{3.0, 400.0};
  EXPECT_EQ(raw.neighbors(q2).front().index, 0u);
  EXPECT_EQ(std_.neighbors(q2).front().index, 2u);
}

TEST(KnnJson, RoundTripAndOverrideRecorded) {
  std::mt19937_64 gen(6);
  std::exponential_distribution<double> ed;
  Matrix rho(100, 3), err(100, 2);
  for (Eigen::Index i = 0; i < rho.size(); ++i) rho.data()[i] = ed(gen);
  for (Eigen::Index i = 0; i < err.size(); ++i) err.data()[i] = ed(gen);
  const KnnCalibration c(rho, err, 0.05, {80, false});
  const auto j = nlohmann::json::parse(io::to_json(c, 80).dump());
  EXPECT_EQ(j["k"], 80);
  EXPECT_EQ(j["k_override"], 80);
  const auto back = io::knn_from_json(j);
  const std::vector<double> q{0.3, 1.2, 0.1};
  EXPECT_EQ(back.half_width(q), c.half_width(q));
}
