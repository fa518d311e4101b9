#pragma once

// On-disk formats for calibrations, interval batches and reports. Doubles go
// through format_double / parse_double so every file round-trips exactly;
// JSON cannot hold infinities, so an infinite width is written as null.

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rupi/conformal.hpp"
#include "rupi/copula_pi.hpp"
#include "rupi/dataio.hpp"
#include "rupi/evalmetrics.hpp"
#include "rupi/knn_pi.hpp"
#include "rupi/textio.hpp"

namespace rupi::io {

using ojson = nlohmann::ordered_json;

inline ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

inline double number_or_inf(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline ojson vector_json(const Vector& v) {
  auto a = ojson::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline Vector vector_from(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_or_inf(j[i]);
  return v;
}

inline ojson matrix_json(const Matrix& m) {
  auto rows = ojson::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline Matrix matrix_from(const nlohmann::json& j, Eigen::Index cols) {
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw DataError("ragged matrix in JSON");
    m.row(static_cast<Eigen::Index>(i)) = vector_from(j[i]).transpose();
  }
  return m;
}

template <class F>
auto guarded(const std::filesystem::path& path, F&& f) {
  try {
    return f(nlohmann::json::parse(textio::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// calibration.json

inline ojson cp_entry(const char* method, const Vector& q_hat, double alpha, std::size_t n_cal) {
  return {{"method", method}, {"alpha", alpha}, {"q_hat", vector_json(q_hat)}, {"n_cal", n_cal}};
}

inline ojson to_json(const SplitCpCalibration& c) {
  return cp_entry("split_cp", c.q_hat, c.alpha, c.n_cal);
}
inline ojson to_json(const NormalizedCpCalibration& c) {
  return cp_entry("normalized_cp", c.q_hat, c.alpha, c.n_cal);
}

template <class Cal>
Cal cp_from_json(const nlohmann::json& j) {
  Cal c;
  c.alpha = j.at("alpha").get<double>();
  c.q_hat = vector_from(j.at("q_hat"));
  c.n_cal = j.at("n_cal").get<std::size_t>();
  return c;
}

/// Finds the entry with the given method tag in calibration.json.
inline const nlohmann::json& find_method(const nlohmann::json& doc, const std::string& method) {
  for (const auto& e : doc.at("methods"))
    if (e.at("method").get<std::string>() == method) return e;
  throw DataError("calibration.json has no entry for " + method);
}

// ---------------------------------------------------------------------------
// copula.json

inline ojson to_json(const CopulaCalibration& c) {
  ojson j;
  j["method"] = "copula";
  j["alpha"] = c.alpha();
  j["ridge"] = c.joint().ridge();
  j["pool_window"] = c.pool_window();
  j["blocks"] = {{"rho", c.rho_dim()}, {"err", c.outputs()}};
  auto cdfs = [](const std::vector<EmpiricalCdf>& v) {
    auto a = ojson::array();
    for (const auto& f : v) a.push_back(f.sorted_samples());
    return a;
  };
  j["rho_cdfs"] = cdfs(c.rho_cdfs());
  j["err_cdfs"] = cdfs(c.err_cdfs());
  j["mean"] = vector_json(c.joint().mean());
  j["covariance"] = matrix_json(c.joint().covariance());
  return j;
}

inline CopulaCalibration copula_from_json(const nlohmann::json& j) {
  auto cdfs = [](const nlohmann::json& a) {
    std::vector<EmpiricalCdf> out;
    for (const auto& s : a) out.emplace_back(s.get<std::vector<double>>());
    return out;
  };
  auto rho = cdfs(j.at("rho_cdfs"));
  auto err = cdfs(j.at("err_cdfs"));
  const auto& blocks = j.at("blocks");
  if (blocks.at("rho").get<std::size_t>() != rho.size() ||
      blocks.at("err").get<std::size_t>() != err.size())
    throw DataError("copula.json: block sizes disagree with the stored marginals");
  Vector mean = vector_from(j.at("mean"));
  Matrix cov = matrix_from(j.at("covariance"), mean.size());
  MultivariateGaussian joint(std::move(mean), std::move(cov), j.at("ridge").get<double>());
  return CopulaCalibration(std::move(rho), std::move(err), std::move(joint),
                           j.at("alpha").get<double>(), j.at("pool_window").get<std::size_t>());
}

// ---------------------------------------------------------------------------
// knn.json

inline ojson to_json(const KnnCalibration& c, std::optional<std::size_t> requested_k) {
  ojson j;
  j["method"] = "knn";
  j["k"] = c.k();
  j["k_override"] = requested_k ? ojson(*requested_k) : ojson(nullptr);
  j["alpha"] = c.alpha();
  j["metric"] = c.standardize() ? "euclidean_standardized" : "euclidean";
  j["rho"] = matrix_json(c.rho());
  j["errors"] = matrix_json(c.errors());
  return j;
}

inline KnnCalibration knn_from_json(const nlohmann::json& j) {
  const auto& rho_j = j.at("rho");
  const auto& err_j = j.at("errors");
  if (rho_j.empty() || err_j.empty()) throw DataError("knn.json: empty calibration matrices");
  Matrix rho = matrix_from(rho_j, static_cast<Eigen::Index>(rho_j[0].size()));
  Matrix err = matrix_from(err_j, static_cast<Eigen::Index>(err_j[0].size()));
  KnnOptions opts;
  opts.k = j.at("k").get<std::size_t>();
  opts.standardize = j.at("metric").get<std::string>() == "euclidean_standardized";
  return KnnCalibration(std::move(rho), std::move(err), j.at("alpha").get<double>(), opts);
}

// ---------------------------------------------------------------------------
// intervals_<method>.csv: row,output,horizon,prediction,lower,upper

inline std::string intervals_csv(const IntervalBatch& b, std::span<const Eigen::Index> rows,
                                 const WindowedDataset& ds) {
  if (static_cast<Eigen::Index>(rows.size()) != b.rows())
    throw DataError("intervals: row index list does not match batch");
  std::string out = "row,output,horizon,prediction,lower,upper\n";
  for (Eigen::Index i = 0; i < b.rows(); ++i)
    for (Eigen::Index j = 0; j < b.outputs(); ++j) {
      out += std::to_string(rows[static_cast<std::size_t>(i)]);
      out += ',';
      out += ds.target_channels[ds.target_channel(j)];
      out += ',';
      out += std::to_string(ds.target_horizon(j));
      for (double v : {b.prediction(i, j), b.lower(i, j), b.upper(i, j)}) {
        out += ',';
        out += textio::format_double(v);
      }
      out += '\n';
    }
  return out;
}

/// Rebuilds a batch over `rows` (dataset row indices, in order) from an
/// intervals file; every (row, output) cell must appear exactly once.
inline IntervalBatch read_intervals(const std::filesystem::path& path,
                                    std::span<const Eigen::Index> rows, const WindowedDataset& ds,
                                    double alpha, std::string method) {
  std::map<Eigen::Index, Eigen::Index> row_pos;
  for (std::size_t i = 0; i < rows.size(); ++i) row_pos[rows[i]] = static_cast<Eigen::Index>(i);
  std::map<std::pair<std::string, int>, Eigen::Index> col_pos;
  for (Eigen::Index j = 0; j < ds.targets.cols(); ++j)
    col_pos[{ds.target_channels[ds.target_channel(j)], ds.target_horizon(j)}] = j;

  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index o = ds.targets.cols();
  IntervalBatch b;
  b.alpha = alpha;
  b.method = std::move(method);
  b.prediction.setConstant(n, o, std::nan(""));
  b.lower = b.prediction;
  b.upper = b.prediction;
  Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic> seen =
      Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, o);

  std::istringstream in(textio::read_file(path));
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || textio::trim(line) != "row,output,horizon,prediction,lower,upper")
    throw ParseError(path.string() + ": unexpected header", 1);
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto f = textio::split_csv(line);
    if (f.size() != 6) throw ParseError(path.string() + ": expected 6 fields", line_no);
    double row_d, h_d, p, lo, hi;
    if (!textio::parse_double(f[0], row_d) || !textio::parse_double(f[2], h_d) ||
        !textio::parse_double(f[3], p) || !textio::parse_double(f[4], lo) ||
        !textio::parse_double(f[5], hi))
      throw ParseError(path.string() + ": non-numeric field", line_no);
    const auto r = row_pos.find(static_cast<Eigen::Index>(row_d));
    const auto c = col_pos.find({f[1], static_cast<int>(h_d)});
    if (r == row_pos.end() || c == col_pos.end())
      throw ParseError(path.string() + ": row or output not in the test split", line_no);
    if (seen(r->second, c->second)) throw ParseError(path.string() + ": duplicate cell", line_no);
    seen(r->second, c->second) = 1;
    b.prediction(r->second, c->second) = p;
    b.lower(r->second, c->second) = lo;
    b.upper(r->second, c->second) = hi;
  }
  if ((seen.array() == 0).any()) throw DataError(path.string() + ": missing interval cells");
  return b;
}

// ---------------------------------------------------------------------------
// report.csv / report.json

inline std::string report_csv(const PiReport& r) {
  std::string out = "method,output,horizon,metric,value,normalized_value,std\n";
  for (const auto& row : r.rows) {
    out += row.method + ',' + row.output + ',' + std::to_string(row.horizon) + ',' + row.metric +
           ',' + textio::format_double(row.value) + ',' +
           textio::format_double(row.normalized_value) + ',' + textio::format_double(row.std) +
           '\n';
  }
  return out;
}

inline ojson report_json(const PiReport& r, std::size_t n_seeds) {
  ojson j;
  j["seeds"] = n_seeds;
  auto rows = ojson::array();
  for (const auto& row : r.rows)
    rows.push_back({{"method", row.method},
                    {"output", row.output},
                    {"horizon", row.horizon},
                    {"metric", row.metric},
                    {"value", number(row.value)},
                    {"normalized_value", number(row.normalized_value)},
                    {"std", number(row.std)}});
  j["rows"] = rows;
  return j;
}

inline PiReport read_report_csv(const std::filesystem::path& path) {
  std::istringstream in(textio::read_file(path));
  std::string line;
  std::getline(in, line);
  PiReport r;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto f = textio::split_csv(line);
    double h;
    ReportRow row;
    if (f.size() != 7 || !textio::parse_double(f[2], h) || !textio::parse_double(f[4], row.value) ||
        !textio::parse_double(f[5], row.normalized_value) || !textio::parse_double(f[6], row.std))
      throw ParseError(path.string() + ": malformed report row", line_no);
    row.method = f[0];
    row.output = f[1];
    row.horizon = static_cast<int>(h);
    row.metric = f[3];
    r.rows.push_back(std::move(row));
  }
  return r;
}

}  // namespace rupi::io
