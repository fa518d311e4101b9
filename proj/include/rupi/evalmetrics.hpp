#pragma once

// Interval quality (PICP, CovP, PINAW, PINAFD, CWFDC) and uncertainty
// quality (correlation, AURC, σ-risk) metrics, plus the long-format report
// that compares interval methods.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "rupi/conformal.hpp"
#include "rupi/error.hpp"
#include "rupi/statcore.hpp"

namespace rupi {

inline constexpr double kCwfdcRho = 1.0;
inline constexpr double kCwfdcBeta = 1000.0;

struct PiMetrics {
  double picp = 0.0;
  double covp = 0.0;
  double pinaw = 0.0;
  double pinafd = 0.0;
  double cwfdc = 0.0;
};

namespace detail {

inline void check_shape(const Matrix& y, const IntervalBatch& b) {
  if (y.rows() != b.rows() || y.cols() != b.outputs())
    throw DataError("metrics: targets are " + std::to_string(y.rows()) + "x" +
                    std::to_string(y.cols()) + ", intervals are " + std::to_string(b.rows()) +
                    "x" + std::to_string(b.outputs()));
}

inline bool covered(double y, double lo, double hi) { return y >= lo && y <= hi; }

inline void check_ranges(std::span<const double> ranges, Eigen::Index outputs) {
  if (static_cast<Eigen::Index>(ranges.size()) != outputs)
    throw DataError("metrics: one range per output is required");
  for (double r : ranges)
    if (!(r > 0.0)) throw DataError("metrics: output range must be positive");
}

}  // namespace detail

/// Fraction of targets inside [L, U] (bounds inclusive), per output.
inline std::vector<double> picp(const Matrix& y, const IntervalBatch& b) {
  detail::check_shape(y, b);
  if (y.rows() < 1) throw DataError("picp: no instances");
  std::vector<double> out(static_cast<std::size_t>(y.cols()), 0.0);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    std::size_t hit = 0;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      hit += detail::covered(y(i, j), b.lower(i, j), b.upper(i, j));
    out[static_cast<std::size_t>(j)] = static_cast<double>(hit) / static_cast<double>(y.rows());
  }
  return out;
}

/// (1 - α + δ - PICP)²; δ defaults to α/50.
inline double covp(double picp_value, double alpha, std::optional<double> delta = std::nullopt) {
  const double d = delta.value_or(alpha / 50.0);
  const double gap = 1.0 - alpha + d - picp_value;
  return gap * gap;
}

/// Mean interval width divided by the output range, per output.
inline std::vector<double> pinaw(const IntervalBatch& b, std::span<const double> ranges) {
  detail::check_ranges(ranges, b.outputs());
  std::vector<double> out(static_cast<std::size_t>(b.outputs()), 0.0);
  if (b.rows() == 0) return out;
  for (Eigen::Index j = 0; j < b.outputs(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < b.rows(); ++i) s += b.upper(i, j) - b.lower(i, j);
    out[static_cast<std::size_t>(j)] =
        s / (static_cast<double>(b.rows()) * ranges[static_cast<std::size_t>(j)]);
  }
  return out;
}

/// Mean range-normalized distance from each uncovered target to its nearest
/// bound, per output; 0 when every target is covered.
inline std::vector<double> pinafd(const Matrix& y, const IntervalBatch& b,
                                  std::span<const double> ranges) {
  detail::check_shape(y, b);
  detail::check_ranges(ranges, b.outputs());
  std::vector<double> out(static_cast<std::size_t>(y.cols()), 0.0);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    double s = 0.0;
    std::size_t misses = 0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (detail::covered(y(i, j), b.lower(i, j), b.upper(i, j))) continue;
      s += std::min(std::abs(y(i, j) - b.upper(i, j)), std::abs(b.lower(i, j) - y(i, j)));
      ++misses;
    }
    if (misses)
      out[static_cast<std::size_t>(j)] =
          s / (ranges[static_cast<std::size_t>(j)] * static_cast<double>(misses));
  }
  return out;
}

inline double cwfdc(double pinaw_value, double pinafd_value, double covp_value,
                    double rho_w = kCwfdcRho, double beta = kCwfdcBeta) {
  return pinaw_value + rho_w * pinafd_value + beta * covp_value;
}

/// Metrics pooled over a set of output columns: coverage and failure
/// distance are averaged over every (instance, column) cell, width over
/// columns.
inline PiMetrics pooled_metrics(const Matrix& y, const IntervalBatch& b,
                                std::span<const double> ranges,
                                std::span<const Eigen::Index> columns, double alpha,
                                double rho_w = kCwfdcRho, double beta = kCwfdcBeta) {
  detail::check_shape(y, b);
  detail::check_ranges(ranges, b.outputs());
  if (columns.empty() || y.rows() < 1) throw DataError("pooled metrics: nothing to pool");
  std::size_t hits = 0, misses = 0;
  double width = 0.0, fail = 0.0;
  for (auto j : columns) {
    const double r = ranges[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      width += (b.upper(i, j) - b.lower(i, j)) / r;
      if (detail::covered(y(i, j), b.lower(i, j), b.upper(i, j))) {
        ++hits;
      } else {
        ++misses;
        fail += std::min(std::abs(y(i, j) - b.upper(i, j)), std::abs(b.lower(i, j) - y(i, j))) / r;
      }
    }
  }
  const double cells = static_cast<double>(y.rows()) * static_cast<double>(columns.size());
  PiMetrics m;
  m.picp = static_cast<double>(hits) / cells;
  m.covp = covp(m.picp, alpha);
  m.pinaw = width / cells;
  m.pinafd = misses ? fail / static_cast<double>(misses) : 0.0;
  m.cwfdc = cwfdc(m.pinaw, m.pinafd, m.covp, rho_w, beta);
  return m;
}

// ---------------------------------------------------------------------------
// Uncertainty quality

/// Area under the risk-coverage curve: instances sorted by increasing
/// uncertainty (ties by index), risk(k) the mean loss of the first k, AURC
/// the mean of risk(1..n).
inline double aurc(std::span<const double> losses, std::span<const double> uncertainties) {
  if (losses.size() != uncertainties.size()) throw DataError("aurc: length mismatch");
  if (losses.empty()) throw DataError("aurc: no instances");
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return uncertainties[a] < uncertainties[b];
  });
  double prefix = 0.0, area = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    prefix += losses[order[k]];
    area += prefix / static_cast<double>(k + 1);
  }
  return area / static_cast<double>(order.size());
}

/// Linear-interpolation quantile of a sorted sample (position q·(n-1)).
inline double interpolated_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Uncertainties after dropping values above Q3 + 1.5·IQR and min-max
/// scaling the rest; dropped entries are nullopt. A degenerate range maps
/// every retained value to 0.
inline std::vector<std::optional<double>> normalize_uncertainty(
    std::span<const double> uncertainties) {
  std::vector<double> sorted(uncertainties.begin(), uncertainties.end());
  std::sort(sorted.begin(), sorted.end());
  const double q1 = interpolated_quantile(sorted, 0.25);
  const double q3 = interpolated_quantile(sorted, 0.75);
  const double fence = q3 + 1.5 * (q3 - q1);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double u : uncertainties)
    if (u <= fence) {
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
  std::vector<std::optional<double>> out(uncertainties.size());
  for (std::size_t i = 0; i < uncertainties.size(); ++i) {
    const double u = uncertainties[i];
    if (u > fence) continue;
    out[i] = hi > lo ? (u - lo) / (hi - lo) : 0.0;
  }
  return out;
}

/// Mean loss over instances whose normalized uncertainty is at most σ, per
/// requested σ; nullopt when no instance qualifies.
inline std::map<double, std::optional<double>> sigma_risk(std::span<const double> losses,
                                                          std::span<const double> uncertainties,
                                                          std::span<const double> sigma_levels) {
  if (losses.size() != uncertainties.size()) throw DataError("sigma_risk: length mismatch");
  if (losses.empty()) throw DataError("sigma_risk: no instances");
  const auto norm = normalize_uncertainty(uncertainties);
  std::map<double, std::optional<double>> out;
  for (double sigma : sigma_levels) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < losses.size(); ++i)
      if (norm[i] && *norm[i] <= sigma + 1e-12) {
        s += losses[i];
        ++n;
      }
    out[sigma] = n ? std::optional<double>(s / static_cast<double>(n)) : std::nullopt;
  }
  return out;
}

struct UncertaintyMetrics {
  std::optional<double> correlation;  // undefined for zero-variance inputs
  double aurc = 0.0;
  std::map<double, std::optional<double>> sigma_risk;
};

enum class CorrelationKind { pearson, spearman };

inline UncertaintyMetrics uncertainty_metrics(std::span<const double> losses,
                                              std::span<const double> uncertainties,
                                              std::span<const double> sigma_levels,
                                              CorrelationKind kind = CorrelationKind::pearson) {
  UncertaintyMetrics m;
  try {
    m.correlation = kind == CorrelationKind::pearson ? pearson(losses, uncertainties)
                                                     : spearman(losses, uncertainties);
  } catch (const DataError&) {
    m.correlation = std::nullopt;
  }
  m.aurc = rupi::aurc(losses, uncertainties);
  m.sigma_risk = rupi::sigma_risk(losses, uncertainties, sigma_levels);
  return m;
}

// ---------------------------------------------------------------------------
// Report

/// Identifies a target column: its channel name and forecast horizon (1-based).
struct OutputLabel {
  std::string name;
  int horizon = 1;
};

inline constexpr const char* kPooledOutput = "all";

struct ReportRow {
  std::string method;
  std::string output;  // channel name, or "all" for pooled rows
  int horizon = 0;     // 0 on rows pooled over every horizon
  std::string metric;
  double value = 0.0;
  double normalized_value = 0.0;
  double std = 0.0;
};

struct PiReport {
  std::vector<ReportRow> rows;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"picp", "covp", "pinaw", "pinafd", "cwfdc"};
  return names;
}

namespace detail {

inline void push_metrics(PiReport& r, const std::string& method, const std::string& output,
                         int horizon, const PiMetrics& m) {
  const double values[] = {m.picp, m.covp, m.pinaw, m.pinafd, m.cwfdc};
  for (std::size_t k = 0; k < 5; ++k)
    r.rows.push_back({method, output, horizon, metric_names()[k], values[k], 0.0, 0.0});
}

}  // namespace detail

/// Min-max normalizes each metric across methods within every
/// (output, horizon, metric) group. Infinite values map to 1; a group with
/// no spread maps to 0.
inline void normalize_report(PiReport& report) {
  std::map<std::tuple<std::string, int, std::string>, std::pair<double, double>> span;
  for (const auto& row : report.rows) {
    auto key = std::make_tuple(row.output, row.horizon, row.metric);
    auto [it, fresh] = span.try_emplace(key, std::numeric_limits<double>::infinity(),
                                        -std::numeric_limits<double>::infinity());
    if (std::isfinite(row.value)) {
      it->second.first = std::min(it->second.first, row.value);
      it->second.second = std::max(it->second.second, row.value);
    }
  }
  for (auto& row : report.rows) {
    const auto [lo, hi] = span.at(std::make_tuple(row.output, row.horizon, row.metric));
    if (!std::isfinite(row.value))
      row.normalized_value = 1.0;
    else if (hi > lo)
      row.normalized_value = (row.value - lo) / (hi - lo);
    else
      row.normalized_value = 0.0;
  }
}

/// Metrics for every method and output column, pooled per horizon
/// (output "all") and overall (output "all", horizon 0), then min-max
/// normalized across methods.
inline PiReport build_report(const std::map<std::string, IntervalBatch>& methods, const Matrix& y,
                             std::span<const double> ranges,
                             const std::vector<OutputLabel>& labels, double alpha) {
  if (static_cast<Eigen::Index>(labels.size()) != y.cols())
    throw DataError("report: one label per output column is required");
  PiReport report;
  std::map<int, std::vector<Eigen::Index>> by_horizon;
  std::vector<Eigen::Index> all(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    by_horizon[labels[static_cast<std::size_t>(j)].horizon].push_back(j);
    all[static_cast<std::size_t>(j)] = j;
  }
  for (const auto& [name, batch] : methods) {
    detail::check_shape(y, batch);
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      const Eigen::Index one[] = {j};
      const auto& label = labels[static_cast<std::size_t>(j)];
      detail::push_metrics(report, name, label.name, label.horizon,
                           pooled_metrics(y, batch, ranges, one, alpha));
    }
    for (const auto& [h, cols] : by_horizon)
      detail::push_metrics(report, name, kPooledOutput, h,
                           pooled_metrics(y, batch, ranges, cols, alpha));
    detail::push_metrics(report, name, kPooledOutput, 0,
                         pooled_metrics(y, batch, ranges, all, alpha));
  }
  normalize_report(report);
  return report;
}

/// Mean and sample standard deviation of each row across reports with
/// identical row layout (one report per seed); normalization is recomputed
/// on the means.
inline PiReport aggregate_reports(const std::vector<PiReport>& reports) {
  if (reports.empty()) throw DataError("aggregate: no reports");
  PiReport out = reports.front();
  const std::size_t n = reports.size();
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    double mean = 0.0;
    for (const auto& rep : reports) {
      if (rep.rows.size() != out.rows.size() || rep.rows[r].metric != out.rows[r].metric ||
          rep.rows[r].method != out.rows[r].method || rep.rows[r].output != out.rows[r].output)
        throw DataError("aggregate: reports have different layouts");
      mean += rep.rows[r].value;
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& rep : reports) ss += (rep.rows[r].value - mean) * (rep.rows[r].value - mean);
    out.rows[r].value = mean;
    out.rows[r].std = n > 1 && std::isfinite(ss) ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }
  normalize_report(out);
  return out;
}

}  // namespace rupi
