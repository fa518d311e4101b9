#pragma once

// Statistical primitives shared by every interval method: empirical CDFs,
// the standard normal CDF and quantile, multivariate Gaussian fitting and
// conditioning, and correlation coefficients.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rupi/error.hpp"

namespace rupi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

// Ceiling that ignores round-off just above an integer, so that e.g.
// (19 + 1) * (1 - 0.05) evaluates to rank 19 and not 20.
inline long ceil_rank(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<long>(r);
  return static_cast<long>(std::ceil(x));
}

inline std::vector<double> column(const Matrix& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Empirical CDF

/// Sorted copy of a sample. Evaluation uses the rank/(n+1) convention so the
/// result is strictly inside (0, 1); the inverse is the nearest-rank order
/// statistic without interpolation.
class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;

  explicit EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw DataError("empirical CDF needs at least one sample");
    for (double v : sorted_)
      if (!std::isfinite(v)) throw DataError("empirical CDF samples must be finite");
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::size_t size() const noexcept { return sorted_.size(); }
  const std::vector<double>& sorted_samples() const noexcept { return sorted_; }
  double min() const { return sorted_.front(); }
  double max() const { return sorted_.back(); }

  double eval(double x) const {
    const double n = static_cast<double>(sorted_.size());
    const auto count = static_cast<double>(std::upper_bound(sorted_.begin(), sorted_.end(), x) -
                                           sorted_.begin());
    return std::clamp(count, 1.0, n) / (n + 1.0);
  }

  double quantile(double q) const {
    const long n = static_cast<long>(sorted_.size());
    long rank = 1;
    if (q >= 1.0)
      rank = n;
    else if (q > 0.0)
      rank = detail::ceil_rank(q * static_cast<double>(n));
    rank = std::clamp(rank, 1L, n);
    return sorted_[static_cast<std::size_t>(rank - 1)];
  }

 private:
  std::vector<double> sorted_;
};

inline EmpiricalCdf ecdf_fit(std::span<const double> samples) {
  return EmpiricalCdf(std::vector<double>(samples.begin(), samples.end()));
}

// ---------------------------------------------------------------------------
// Standard normal

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double norm_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse standard normal CDF: Acklam's rational approximation (relative
/// error ~1e-9) followed by one Halley step on erfc.
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DataError("norm_quantile: probability must lie strictly inside (0, 1), got " +
                    std::to_string(p));

  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// ---------------------------------------------------------------------------
// Multivariate Gaussian

/// Mean and covariance of a d-dimensional Gaussian. `covariance` already
/// includes `ridge` on its diagonal; its Cholesky factor is computed once at
/// construction.
class MultivariateGaussian {
 public:
  MultivariateGaussian() = default;

  MultivariateGaussian(Vector mean, Matrix covariance, double ridge = 0.0)
      : mean_(std::move(mean)), cov_(std::move(covariance)), ridge_(ridge) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
      throw DataError("MultivariateGaussian: mean/covariance dimension mismatch");
    if (ridge_ < 0.0) throw ConfigError("MultivariateGaussian: ridge must be nonnegative");
    if (dim() > 0 && (cov_ - cov_.transpose()).cwiseAbs().maxCoeff() >
                         1e-10 * std::max(1.0, cov_.cwiseAbs().maxCoeff()))
      throw DataError("MultivariateGaussian: covariance is not symmetric");
    cov_ = 0.5 * (cov_ + cov_.transpose());
    if (dim() > 0) {
      llt_.compute(cov_);
      positive_definite_ = llt_.info() == Eigen::Success && llt_.rcond() > 1e-15;
    }
  }

  Eigen::Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& covariance() const noexcept { return cov_; }
  double ridge() const noexcept { return ridge_; }
  /// False for singular fits (e.g. ridge 0 on collinear data); conditioning
  /// on such a block fails.
  bool positive_definite() const noexcept { return positive_definite_; }
  const Eigen::LLT<Matrix>& cholesky() const noexcept { return llt_; }

 private:
  Vector mean_;
  Matrix cov_;
  double ridge_ = 0.0;
  Eigen::LLT<Matrix> llt_;
  bool positive_definite_ = false;
};

/// Column means and unbiased sample covariance of the rows of `samples`,
/// with `ridge` added to the diagonal.
inline MultivariateGaussian gauss_fit(const Matrix& samples, double ridge = 1e-6) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw DataError("gauss_fit: need at least two samples, got " + std::to_string(n));
  if (ridge < 0.0) throw ConfigError("gauss_fit: ridge must be nonnegative");
  Vector mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - mean.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov.diagonal().array() += ridge;
  return MultivariateGaussian(std::move(mean), std::move(cov), ridge);
}

/// Conditioning of a joint Gaussian on a fixed set of observed coordinates.
/// The gain Σ_uo Σ_oo⁻¹ and the conditional covariance do not depend on the
/// observed values, so they are computed once and reused for every query.
class GaussianConditioner {
 public:
  GaussianConditioner() = default;

  GaussianConditioner(const MultivariateGaussian& joint, std::vector<Eigen::Index> observed)
      : observed_(std::move(observed)) {
    const Eigen::Index d = joint.dim();
    std::vector<char> seen(static_cast<std::size_t>(d), 0);
    for (auto idx : observed_) {
      if (idx < 0 || idx >= d)
        throw DataError("gauss_condition: observed index " + std::to_string(idx) +
                        " out of range");
      if (seen[static_cast<std::size_t>(idx)]++)
        throw DataError("gauss_condition: duplicate observed index " + std::to_string(idx));
    }
    for (Eigen::Index i = 0; i < d; ++i)
      if (!seen[static_cast<std::size_t>(i)]) free_.push_back(i);

    const auto no = static_cast<Eigen::Index>(observed_.size());
    const auto nu = static_cast<Eigen::Index>(free_.size());
    const Matrix& cov = joint.covariance();
    const Vector& mu = joint.mean();

    mu_free_.resize(nu);
    mu_obs_.resize(no);
    for (Eigen::Index a = 0; a < nu; ++a) mu_free_(a) = mu(free_[a]);
    for (Eigen::Index a = 0; a < no; ++a) mu_obs_(a) = mu(observed_[a]);

    Matrix s_uu(nu, nu), s_uo(nu, no), s_oo(no, no);
    for (Eigen::Index a = 0; a < nu; ++a) {
      for (Eigen::Index b = 0; b < nu; ++b) s_uu(a, b) = cov(free_[a], free_[b]);
      for (Eigen::Index b = 0; b < no; ++b) s_uo(a, b) = cov(free_[a], observed_[b]);
    }
    for (Eigen::Index a = 0; a < no; ++a)
      for (Eigen::Index b = 0; b < no; ++b) s_oo(a, b) = cov(observed_[a], observed_[b]);

    if (no == 0) {
      gain_ = Matrix::Zero(nu, 0);
      cov_ = s_uu;
      return;
    }
    Eigen::LLT<Matrix> llt(s_oo);
    const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (llt.info() != Eigen::Success || !(rcond > 1e-15))
      throw NumericError("gauss_condition: observed covariance block is singular "
                         "(reciprocal condition estimate " + std::to_string(rcond) + ")");
    gain_ = llt.solve(s_uo.transpose()).transpose();
    cov_ = s_uu - gain_ * s_uo.transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose());
  }

  const std::vector<Eigen::Index>& observed() const noexcept { return observed_; }
  const std::vector<Eigen::Index>& free() const noexcept { return free_; }
  const Matrix& covariance() const noexcept { return cov_; }

  Vector mean(const Eigen::Ref<const Vector>& observed_vals) const {
    if (observed_vals.size() != static_cast<Eigen::Index>(observed_.size()))
      throw DataError("gauss_condition: expected " + std::to_string(observed_.size()) +
                      " observed values, got " + std::to_string(observed_vals.size()));
    if (observed_.empty()) return mu_free_;
    return mu_free_ + gain_ * (observed_vals - mu_obs_);
  }

  MultivariateGaussian condition(const Eigen::Ref<const Vector>& observed_vals) const {
    return MultivariateGaussian(mean(observed_vals), cov_, 0.0);
  }

 private:
  std::vector<Eigen::Index> observed_;
  std::vector<Eigen::Index> free_;
  Vector mu_free_;
  Vector mu_obs_;
  Matrix gain_;
  Matrix cov_;
};

/// Distribution of the unobserved coordinates (in increasing index order)
/// given the observed ones.
inline MultivariateGaussian gauss_condition(const MultivariateGaussian& joint,
                                            std::vector<Eigen::Index> observed_idx,
                                            const Eigen::Ref<const Vector>& observed_vals) {
  if (observed_idx.empty()) return joint;
  return GaussianConditioner(joint, std::move(observed_idx)).condition(observed_vals);
}

// ---------------------------------------------------------------------------
// Correlation

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DataError("pearson: length mismatch");
  if (a.size() < 2) throw DataError("pearson: need at least two points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) throw DataError("pearson: undefined for zero-variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Ranks starting at 1; tied values share their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

}  // namespace rupi
