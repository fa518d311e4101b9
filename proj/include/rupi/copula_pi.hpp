#pragma once

// Gaussian copula prediction intervals.
//
// Every column of the calibration errors (ρ block first, then e block) is
// mapped to normal scores through its own empirical CDF, z = Φ⁻¹(F̂(x)). A
// joint Gaussian is fitted to the scores. For a query ρ row the e-scores are
// conditioned on the observed ρ-scores; the (1-α) quantile of each output's
// conditional marginal is mapped back to error units through Φ and the
// empirical quantile function of that output's errors.

#include <cmath>
#include <numeric>
#include <vector>

#include "rupi/calibration_errors.hpp"
#include "rupi/conformal.hpp"
#include "rupi/error.hpp"
#include "rupi/statcore.hpp"

namespace rupi {

struct CopulaOptions {
  double ridge = 1e-6;
  /// When > 0, ρ columns are averaged over consecutive groups of this many
  /// columns (one group per input channel of a flattened window) before the
  /// copula is fitted. 0 keeps every feature.
  std::size_t pool_window = 0;
};

class CopulaCalibration {
 public:
  CopulaCalibration() = default;

  CopulaCalibration(std::vector<EmpiricalCdf> rho_cdfs, std::vector<EmpiricalCdf> err_cdfs,
                    MultivariateGaussian joint, double alpha, std::size_t pool_window = 0)
      : rho_cdfs_(std::move(rho_cdfs)),
        err_cdfs_(std::move(err_cdfs)),
        joint_(std::move(joint)),
        alpha_(alpha),
        pool_window_(pool_window) {
    check_alpha(alpha_);
    if (joint_.dim() != static_cast<Eigen::Index>(rho_cdfs_.size() + err_cdfs_.size()))
      throw DataError("copula: joint dimension does not equal rho + err block sizes");
    std::vector<Eigen::Index> observed(rho_cdfs_.size());
    std::iota(observed.begin(), observed.end(), Eigen::Index{0});
    conditioner_ = GaussianConditioner(joint_, std::move(observed));
    z_level_ = norm_quantile(1.0 - alpha_);
    cond_sd_.resize(static_cast<Eigen::Index>(err_cdfs_.size()));
    for (Eigen::Index j = 0; j < cond_sd_.size(); ++j)
      cond_sd_(j) = std::sqrt(std::max(0.0, conditioner_.covariance()(j, j)));
  }

  const std::vector<EmpiricalCdf>& rho_cdfs() const noexcept { return rho_cdfs_; }
  const std::vector<EmpiricalCdf>& err_cdfs() const noexcept { return err_cdfs_; }
  const MultivariateGaussian& joint() const noexcept { return joint_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t pool_window() const noexcept { return pool_window_; }
  std::size_t rho_dim() const noexcept { return rho_cdfs_.size(); }
  std::size_t outputs() const noexcept { return err_cdfs_.size(); }

  /// Width of the raw ρ rows this calibration accepts.
  std::size_t input_dim() const noexcept {
    return pool_window_ ? rho_cdfs_.size() * pool_window_ : rho_cdfs_.size();
  }

  /// Normal scores of a ρ row (after pooling, if enabled).
  Vector rho_scores(std::span<const double> rho_row) const {
    const auto pooled = pool(rho_row);
    Vector z(static_cast<Eigen::Index>(pooled.size()));
    for (std::size_t j = 0; j < pooled.size(); ++j)
      z(static_cast<Eigen::Index>(j)) = norm_quantile(rho_cdfs_[j].eval(pooled[j]));
    return z;
  }

  /// Conditional mean and standard deviation of the e-scores given ρ.
  std::pair<Vector, Vector> conditional(std::span<const double> rho_row) const {
    return {conditioner_.mean(rho_scores(rho_row)), cond_sd_};
  }

  Vector half_width(std::span<const double> rho_row) const {
    for (double v : rho_row)
      if (!(v >= 0.0)) throw DataError("copula: reconstruction errors must be nonnegative");
    const auto [mu, sd] = conditional(rho_row);
    Vector eps(mu.size());
    for (Eigen::Index j = 0; j < mu.size(); ++j) {
      const double z = mu(j) + z_level_ * sd(j);
      eps(j) = err_cdfs_[static_cast<std::size_t>(j)].quantile(norm_cdf(z));
    }
    return eps;
  }

  /// Φ((e* - μ)/σ) per output: the probability-integral transform of the
  /// observed errors under the conditional model.
  Vector score(std::span<const double> rho_row, std::span<const double> err_row) const {
    if (err_row.size() != err_cdfs_.size()) throw DataError("copula: err row has wrong width");
    const auto [mu, sd] = conditional(rho_row);
    Vector s(mu.size());
    for (Eigen::Index j = 0; j < mu.size(); ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double e_star = norm_quantile(err_cdfs_[ju].eval(err_row[ju]));
      const double diff = e_star - mu(j);
      if (sd(j) > 0.0)
        s(j) = norm_cdf(diff / sd(j));
      else
        s(j) = diff > 0.0 ? 1.0 : (diff < 0.0 ? 0.0 : 0.5);
    }
    return s;
  }

  IntervalBatch intervals(const Matrix& predictions, const Matrix& rho) const {
    if (predictions.rows() != rho.rows())
      throw DataError("copula: prediction and rho row counts differ");
    if (predictions.cols() != static_cast<Eigen::Index>(outputs()))
      throw DataError("copula: prediction output count mismatch");
    Matrix half(predictions.rows(), predictions.cols());
    std::vector<double> row(static_cast<std::size_t>(rho.cols()));
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      for (Eigen::Index j = 0; j < rho.cols(); ++j) row[static_cast<std::size_t>(j)] = rho(i, j);
      half.row(i) = half_width(row).transpose();
    }
    return IntervalBatch::symmetric(predictions, half, alpha_, "copula");
  }

  std::vector<double> pool(std::span<const double> rho_row) const {
    if (rho_row.size() != input_dim())
      throw DataError("copula: rho row has width " + std::to_string(rho_row.size()) +
                      ", expected " + std::to_string(input_dim()));
    if (!pool_window_) return {rho_row.begin(), rho_row.end()};
    return pool_groups(rho_row, pool_window_);
  }

  static std::vector<double> pool_groups(std::span<const double> row, std::size_t window) {
    std::vector<double> out(row.size() / window, 0.0);
    for (std::size_t g = 0; g < out.size(); ++g) {
      for (std::size_t s = 0; s < window; ++s) out[g] += row[g * window + s];
      out[g] /= static_cast<double>(window);
    }
    return out;
  }

 private:
  std::vector<EmpiricalCdf> rho_cdfs_;
  std::vector<EmpiricalCdf> err_cdfs_;
  MultivariateGaussian joint_;
  double alpha_ = 0.05;
  std::size_t pool_window_ = 0;
  GaussianConditioner conditioner_;
  double z_level_ = 0.0;
  Vector cond_sd_;
};

/// Normal scores of every entry of `m`, column by column, through the
/// matching empirical CDF.
inline Matrix normal_scores(const Matrix& m, const std::vector<EmpiricalCdf>& cdfs) {
  Matrix z(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      z(i, j) = norm_quantile(cdfs[static_cast<std::size_t>(j)].eval(m(i, j)));
  return z;
}

inline CopulaCalibration copula_calibrate(const CalibrationErrors& cal, double alpha,
                                          const CopulaOptions& opts = {}) {
  check_alpha(alpha);
  if (cal.rows() < 2) throw DataError("copula: need at least two calibration rows");
  Matrix rho = cal.rho;
  if (opts.pool_window) {
    if (rho.cols() % static_cast<Eigen::Index>(opts.pool_window) != 0)
      throw ConfigError("copula: rho width is not a multiple of the pooling window");
    const auto groups = rho.cols() / static_cast<Eigen::Index>(opts.pool_window);
    Matrix pooled(rho.rows(), groups);
    std::vector<double> row(static_cast<std::size_t>(rho.cols()));
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      for (Eigen::Index j = 0; j < rho.cols(); ++j) row[static_cast<std::size_t>(j)] = rho(i, j);
      const auto p = CopulaCalibration::pool_groups(row, opts.pool_window);
      for (Eigen::Index g = 0; g < groups; ++g) pooled(i, g) = p[static_cast<std::size_t>(g)];
    }
    rho = std::move(pooled);
  }

  std::vector<EmpiricalCdf> rho_cdfs, err_cdfs;
  for (Eigen::Index j = 0; j < rho.cols(); ++j) rho_cdfs.emplace_back(detail::column(rho, j));
  for (Eigen::Index j = 0; j < cal.err.cols(); ++j)
    err_cdfs.emplace_back(detail::column(cal.err, j));

  Matrix z(cal.rows(), rho.cols() + cal.err.cols());
  z.leftCols(rho.cols()) = normal_scores(rho, rho_cdfs);
  z.rightCols(cal.err.cols()) = normal_scores(cal.err, err_cdfs);

  return CopulaCalibration(std::move(rho_cdfs), std::move(err_cdfs), gauss_fit(z, opts.ridge),
                           alpha, opts.pool_window);
}

}  // namespace rupi
