#pragma once

// Split conformal prediction and its normalized variant. Both calibrate one
// width per output column from a held-out set of absolute errors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rupi/error.hpp"
#include "rupi/statcore.hpp"

namespace rupi {

/// Symmetric prediction intervals for n instances and O outputs.
struct IntervalBatch {
  Matrix prediction;
  Matrix lower;
  Matrix upper;
  double alpha = 0.05;
  std::string method;

  Eigen::Index rows() const noexcept { return lower.rows(); }
  Eigen::Index outputs() const noexcept { return lower.cols(); }

  /// Bounds `prediction ± half_width`, elementwise.
  static IntervalBatch symmetric(const Matrix& prediction, const Matrix& half_width, double alpha,
                                 std::string method) {
    if (prediction.rows() != half_width.rows() || prediction.cols() != half_width.cols())
      throw DataError("interval half-widths do not match prediction shape");
    IntervalBatch b;
    b.prediction = prediction;
    b.lower = prediction - half_width;
    b.upper = prediction + half_width;
    b.alpha = alpha;
    b.method = std::move(method);
    return b;
  }
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha must lie in (0, 1), got " + std::to_string(alpha));
}

/// The ⌈(m+1)(1-α)⌉-th smallest of m scores. Returns +infinity when that rank
/// exceeds m: the calibration set is too small for the requested coverage.
inline double adjusted_quantile(std::span<const double> scores, double alpha) {
  check_alpha(alpha);
  if (scores.empty()) throw DataError("adjusted_quantile: no calibration scores");
  const long m = static_cast<long>(scores.size());
  const long rank = std::max(1L, detail::ceil_rank(static_cast<double>(m + 1) * (1.0 - alpha)));
  if (rank > m) return std::numeric_limits<double>::infinity();
  std::vector<double> s(scores.begin(), scores.end());
  std::nth_element(s.begin(), s.begin() + (rank - 1), s.end());
  return s[static_cast<std::size_t>(rank - 1)];
}

struct SplitCpCalibration {
  Vector q_hat;
  double alpha = 0.05;
  std::size_t n_cal = 0;
};

struct NormalizedCpCalibration {
  Vector q_hat;
  double alpha = 0.05;
  std::size_t n_cal = 0;
};

inline SplitCpCalibration split_cp_calibrate(const Matrix& errors, double alpha) {
  if (errors.rows() < 1) throw DataError("split CP: empty calibration set");
  SplitCpCalibration cal;
  cal.alpha = alpha;
  cal.n_cal = static_cast<std::size_t>(errors.rows());
  cal.q_hat.resize(errors.cols());
  for (Eigen::Index j = 0; j < errors.cols(); ++j)
    cal.q_hat(j) = adjusted_quantile(detail::column(errors, j), alpha);
  return cal;
}

inline IntervalBatch split_cp_intervals(const SplitCpCalibration& cal, const Matrix& predictions) {
  if (predictions.cols() != cal.q_hat.size())
    throw DataError("split CP: prediction has " + std::to_string(predictions.cols()) +
                    " outputs, calibration has " + std::to_string(cal.q_hat.size()));
  const Matrix half = cal.q_hat.transpose().replicate(predictions.rows(), 1);
  return IntervalBatch::symmetric(predictions, half, cal.alpha, "split_cp");
}

namespace detail {
inline void check_sigma(std::span<const double> sigma) {
  for (double s : sigma)
    if (!(s > 0.0) || !std::isfinite(s))
      throw DataError("normalized CP: every uncertainty value must be positive and finite");
}
}  // namespace detail

/// Scores are e_ij / σ_i; one adjusted quantile per output.
inline NormalizedCpCalibration normalized_cp_calibrate(const Matrix& errors,
                                                       std::span<const double> sigma,
                                                       double alpha) {
  if (errors.rows() < 1) throw DataError("normalized CP: empty calibration set");
  if (static_cast<Eigen::Index>(sigma.size()) != errors.rows())
    throw DataError("normalized CP: sigma length does not match calibration rows");
  detail::check_sigma(sigma);
  NormalizedCpCalibration cal;
  cal.alpha = alpha;
  cal.n_cal = static_cast<std::size_t>(errors.rows());
  cal.q_hat.resize(errors.cols());
  std::vector<double> scores(static_cast<std::size_t>(errors.rows()));
  for (Eigen::Index j = 0; j < errors.cols(); ++j) {
    for (Eigen::Index i = 0; i < errors.rows(); ++i)
      scores[static_cast<std::size_t>(i)] = errors(i, j) / sigma[static_cast<std::size_t>(i)];
    cal.q_hat(j) = adjusted_quantile(scores, alpha);
  }
  return cal;
}

inline IntervalBatch normalized_cp_intervals(const NormalizedCpCalibration& cal,
                                             const Matrix& predictions,
                                             std::span<const double> sigma) {
  if (predictions.cols() != cal.q_hat.size())
    throw DataError("normalized CP: output count mismatch");
  if (static_cast<Eigen::Index>(sigma.size()) != predictions.rows())
    throw DataError("normalized CP: sigma length does not match prediction rows");
  detail::check_sigma(sigma);
  Matrix half(predictions.rows(), predictions.cols());
  for (Eigen::Index i = 0; i < predictions.rows(); ++i)
    for (Eigen::Index j = 0; j < predictions.cols(); ++j)
      half(i, j) = cal.q_hat(j) * sigma[static_cast<std::size_t>(i)];
  return IntervalBatch::symmetric(predictions, half, cal.alpha, "normalized_cp");
}

}  // namespace rupi
