#pragma once

// Nearest-neighbour prediction intervals: the calibration set for a query is
// restricted to the k validation rows closest to it in reconstruction-error
// space, and the width is the adjusted (1-α) quantile of their errors.

#include <cfenv>
#include <cmath>
#include <optional>
#include <vector>

#include "rupi/calibration_errors.hpp"
#include "rupi/conformal.hpp"
#include "rupi/error.hpp"
#include "rupi/kdtree.hpp"

namespace rupi {

/// Neighbourhood size. Defaults to round-half-even(√n_v), raised to at least
/// ⌈2/α - 1⌉ (capped at n_v) when n_v < (2/α - 1)², below which √n_v
/// neighbours would make the adjusted quantile the neighbourhood maximum.
inline std::size_t choose_k(std::size_t n_v, double alpha,
                            std::optional<std::size_t> override_k = std::nullopt) {
  check_alpha(alpha);
  if (n_v < 1) throw DataError("choose_k: empty validation set");
  if (override_k) {
    if (*override_k < 1 || *override_k > n_v)
      throw ConfigError("k override " + std::to_string(*override_k) + " must lie in [1, " +
                        std::to_string(n_v) + "]");
    return *override_k;
  }
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const auto k0 = static_cast<std::size_t>(std::nearbyint(std::sqrt(static_cast<double>(n_v))));
  std::fesetround(saved);

  const double threshold = 2.0 / alpha - 1.0;
  if (static_cast<double>(n_v) < threshold * threshold) {
    const auto k_min = static_cast<std::size_t>(detail::ceil_rank(threshold));
    return std::min(n_v, std::max(k0, k_min));
  }
  return std::max<std::size_t>(k0, 1);
}

struct KnnOptions {
  std::optional<std::size_t> k;
  /// Standardize each ρ feature by its calibration mean/std before indexing.
  bool standardize = false;
};

class KnnCalibration {
 public:
  KnnCalibration() = default;

  KnnCalibration(Matrix rho, Matrix errors, double alpha, const KnnOptions& opts = {})
      : rho_(std::move(rho)), errors_(std::move(errors)), alpha_(alpha),
        standardize_(opts.standardize) {
    check_alpha(alpha_);
    if (rho_.rows() < 1) throw DataError("KNN: empty calibration set");
    if (rho_.rows() != errors_.rows()) throw DataError("KNN: rho and error row counts differ");
    if (rho_.cols() < 1) throw DataError("KNN: rho must have at least one column");
    k_ = choose_k(static_cast<std::size_t>(rho_.rows()), alpha_, opts.k);

    const auto d = static_cast<std::size_t>(rho_.cols());
    shift_.assign(d, 0.0);
    scale_.assign(d, 1.0);
    if (standardize_) {
      for (std::size_t j = 0; j < d; ++j) {
        const auto col = rho_.col(static_cast<Eigen::Index>(j));
        const double m = col.mean();
        const double var = (col.array() - m).square().mean();
        shift_[j] = m;
        scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
      }
    }
    std::vector<double> pts(static_cast<std::size_t>(rho_.rows()) * d);
    for (Eigen::Index i = 0; i < rho_.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        pts[static_cast<std::size_t>(i) * d + j] =
            (rho_(i, static_cast<Eigen::Index>(j)) - shift_[j]) / scale_[j];
    tree_ = KdTree<double>(std::move(pts), d);
  }

  std::size_t k() const noexcept { return k_; }
  double alpha() const noexcept { return alpha_; }
  bool standardize() const noexcept { return standardize_; }
  const Matrix& rho() const noexcept { return rho_; }
  const Matrix& errors() const noexcept { return errors_; }
  const KdTree<double>& tree() const noexcept { return tree_; }

  /// Rank of the adjusted quantile within a neighbourhood of size k; the
  /// maximum when ⌈(k+1)(1-α)⌉ exceeds k.
  static std::size_t quantile_rank(std::size_t k, double alpha) {
    const long r = detail::ceil_rank(static_cast<double>(k + 1) * (1.0 - alpha));
    return static_cast<std::size_t>(std::clamp(r, 1L, static_cast<long>(k)));
  }

  std::vector<Neighbor> neighbors(std::span<const double> rho_row) const {
    if (rho_row.size() != tree_.dim()) throw DataError("KNN: rho row has wrong width");
    std::vector<double> q(rho_row.begin(), rho_row.end());
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (!std::isfinite(q[j])) throw DataError("KNN: rho row must be finite");
      q[j] = (q[j] - shift_[j]) / scale_[j];
    }
    return tree_.knn(q, k_);
  }

  Vector half_width(std::span<const double> rho_row) const {
    const auto nb = neighbors(rho_row);
    const std::size_t rank = quantile_rank(nb.size(), alpha_);
    Vector w(errors_.cols());
    std::vector<double> col(nb.size());
    for (Eigen::Index j = 0; j < errors_.cols(); ++j) {
      for (std::size_t t = 0; t < nb.size(); ++t)
        col[t] = errors_(static_cast<Eigen::Index>(nb[t].index), j);
      std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                       col.end());
      w(j) = col[rank - 1];
    }
    return w;
  }

  IntervalBatch intervals(const Matrix& predictions, const Matrix& rho) const {
    if (predictions.rows() != rho.rows())
      throw DataError("KNN: prediction and rho row counts differ");
    if (predictions.cols() != errors_.cols()) throw DataError("KNN: output count mismatch");
    Matrix half(predictions.rows(), predictions.cols());
    std::vector<double> row(static_cast<std::size_t>(rho.cols()));
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      for (Eigen::Index j = 0; j < rho.cols(); ++j) row[static_cast<std::size_t>(j)] = rho(i, j);
      half.row(i) = half_width(row).transpose();
    }
    return IntervalBatch::symmetric(predictions, half, alpha_, "knn");
  }

 private:
  Matrix rho_;
  Matrix errors_;
  double alpha_ = 0.05;
  bool standardize_ = false;
  std::size_t k_ = 1;
  std::vector<double> shift_, scale_;
  KdTree<double> tree_;
};

inline KnnCalibration knn_calibrate(const CalibrationErrors& cal, double alpha,
                                    const KnnOptions& opts = {}) {
  return KnnCalibration(cal.rho, cal.err, alpha, opts);
}

}  // namespace rupi
