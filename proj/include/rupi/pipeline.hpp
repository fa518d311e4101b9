#pragma once

// Run configuration and the pipeline stages behind the command-line tool.
// Stages talk to each other only through files under the run directory:
//
//   <out>/seed_<s>/dataset/            preprocess
//   <out>/seed_<s>/model.json          train
//   <out>/seed_<s>/intervals_<m>.csv   intervals (+ calibration.json, copula.json,
//                                      knn.json, test_uncertainty.csv)
//   <out>/seed_<s>/report.csv|json     evaluate (+ uncertainty.json)
//   <out>/report.csv|json              evaluate / report, aggregated over seeds

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rupi/conformal.hpp"
#include "rupi/copula_pi.hpp"
#include "rupi/dataio.hpp"
#include "rupi/evalmetrics.hpp"
#include "rupi/knn_pi.hpp"
#include "rupi/neural.hpp"
#include "rupi/serialize.hpp"

namespace rupi {

namespace fs = std::filesystem;

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m = {"split_cp", "normalized_cp", "copula", "knn"};
  return m;
}

enum class RangeSource { test, train };

struct RunConfig {
  std::optional<SyntheticSpec> synthetic;
  fs::path csv;
  std::vector<std::string> csv_channels;
  DatasetRecipe recipe;
  ArchitectureConfig arch;
  TrainConfig train;
  double alpha = 0.05;
  std::vector<std::string> methods = all_methods();
  std::optional<std::size_t> knn_k;
  bool knn_standardize = false;
  std::vector<std::size_t> sweep_k{5, 10, 20, 40, 80};
  CopulaOptions copula;
  RangeSource range_source = RangeSource::test;
  std::vector<double> sigma_levels{0.1, 0.2};
  CorrelationKind correlation = CorrelationKind::pearson;
  std::vector<std::uint64_t> seeds{0};
  fs::path output = "runs";

  void validate() const {
    check_alpha(alpha);
    if (methods.empty()) throw ConfigError("methods must name at least one method");
    for (const auto& m : methods)
      if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end())
        throw ConfigError("unknown method '" + m + "'");
    if (recipe.window < 1 || recipe.horizon < 1) throw ConfigError("window and horizon must be ≥ 1");
    if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
    if (!synthetic && csv.empty()) throw ConfigError("data: give either a csv path or a synthetic spec");
    if (synthetic) synthetic->validate();
    recipe.preprocess.validate();
    train.validate();
    if (arch.latent < 1) throw ConfigError("model.latent must be positive");
    if (knn_k && *knn_k < 1) throw ConfigError("knn.k must be positive");
    if (!(copula.ridge >= 0.0)) throw ConfigError("copula.ridge must be nonnegative");
    for (double s : sigma_levels)
      if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("sigma levels must lie in [0, 1]");
  }

  fs::path seed_dir(std::uint64_t seed) const { return output / ("seed_" + std::to_string(seed)); }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

}  // namespace detail

/// Parses a run configuration; a relative csv path is resolved against
/// `base_dir` (the config file's directory).
inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  try {
    detail::reject_unknown(j,
                           {"data", "preprocess", "window", "split_fractions", "model", "alpha",
                            "methods", "knn", "copula", "range_split", "sigma_levels",
                            "correlation", "seeds", "output"},
                           "config");
    const auto& data = j.at("data");
    detail::reject_unknown(data, {"csv", "channels", "synthetic"}, "data");
    if (data.contains("synthetic")) {
      const auto& s = data["synthetic"];
      detail::reject_unknown(s,
                             {"n_subjects", "steps_per_subject", "n_channels", "noise_scale_fn",
                              "shift_magnitude", "sample_period"},
                             "data.synthetic");
      SyntheticSpec spec;
      detail::read_opt(s, "n_subjects", spec.n_subjects);
      detail::read_opt(s, "steps_per_subject", spec.steps_per_subject);
      detail::read_opt(s, "n_channels", spec.n_channels);
      detail::read_opt(s, "noise_scale_fn", spec.noise_scale_fn);
      detail::read_opt(s, "shift_magnitude", spec.shift_magnitude);
      detail::read_opt(s, "sample_period", spec.sample_period);
      c.synthetic = spec;
    }
    if (data.contains("csv")) {
      if (c.synthetic) throw ConfigError("data: csv and synthetic are mutually exclusive");
      c.csv = data["csv"].get<std::string>();
      if (c.csv.is_relative() && !base_dir.empty()) c.csv = base_dir / c.csv;
      c.csv_channels = data.at("channels").get<std::vector<std::string>>();
      if (c.csv_channels.empty()) throw ConfigError("data.channels must not be empty");
    }

    if (j.contains("preprocess")) {
      const auto& p = j["preprocess"];
      detail::reject_unknown(p,
                             {"value_floor", "value_ceilings", "resample_period", "resample_stats",
                              "normalization", "drop_missing"},
                             "preprocess");
      auto& pc = c.recipe.preprocess;
      if (p.contains("value_floor") && !p["value_floor"].is_null())
        pc.value_floor = p["value_floor"].get<double>();
      detail::read_opt(p, "value_ceilings", pc.value_ceilings);
      if (p.contains("resample_period") && !p["resample_period"].is_null())
        pc.resample_period = p["resample_period"].get<std::int64_t>();
      if (p.contains("resample_stats")) {
        pc.resample_stats.clear();
        for (const auto& s : p["resample_stats"]) pc.resample_stats.push_back(parse_stat(s.get<std::string>()));
      }
      if (p.contains("normalization"))
        pc.normalization = parse_normalization(p["normalization"].get<std::string>());
      detail::read_opt(p, "drop_missing", pc.drop_missing);
    }

    if (j.contains("window")) {
      const auto& w = j["window"];
      detail::reject_unknown(w, {"input_steps", "horizon", "targets"}, "window");
      detail::read_opt(w, "input_steps", c.recipe.window);
      detail::read_opt(w, "horizon", c.recipe.horizon);
      detail::read_opt(w, "targets", c.recipe.target_channels);
    }
    if (j.contains("split_fractions")) {
      const auto f = j["split_fractions"].get<std::vector<double>>();
      if (f.size() != 3) throw ConfigError("split_fractions needs three entries (train, validation, test)");
      c.recipe.fractions = {f[0], f[1], f[2]};
    }

    if (j.contains("model")) {
      const auto& m = j["model"];
      detail::reject_unknown(m,
                             {"encoder_hidden", "latent", "head_hidden", "decoder_hidden",
                              "activation", "learning_rate", "max_epochs", "batch_size",
                              "patience", "weight_decay"},
                             "model");
      detail::read_opt(m, "encoder_hidden", c.arch.encoder_hidden);
      detail::read_opt(m, "latent", c.arch.latent);
      detail::read_opt(m, "head_hidden", c.arch.head_hidden);
      detail::read_opt(m, "decoder_hidden", c.arch.decoder_hidden);
      if (m.contains("activation")) {
        c.arch.activation = parse_activation(m["activation"].get<std::string>());
        if (c.arch.activation == Activation::identity)
          throw ConfigError("hidden activation must be relu or tanh");
      }
      detail::read_opt(m, "learning_rate", c.train.learning_rate);
      detail::read_opt(m, "max_epochs", c.train.max_epochs);
      detail::read_opt(m, "batch_size", c.train.batch_size);
      detail::read_opt(m, "patience", c.train.patience);
      detail::read_opt(m, "weight_decay", c.train.weight_decay);
    }

    detail::read_opt(j, "alpha", c.alpha);
    detail::read_opt(j, "methods", c.methods);
    if (j.contains("knn")) {
      const auto& k = j["knn"];
      detail::reject_unknown(k, {"k", "standardize", "sweep"}, "knn");
      if (k.contains("k") && !k["k"].is_null()) c.knn_k = k["k"].get<std::size_t>();
      detail::read_opt(k, "standardize", c.knn_standardize);
      detail::read_opt(k, "sweep", c.sweep_k);
    }
    if (j.contains("copula")) {
      const auto& cp = j["copula"];
      detail::reject_unknown(cp, {"ridge", "pool_window"}, "copula");
      detail::read_opt(cp, "ridge", c.copula.ridge);
      detail::read_opt(cp, "pool_window", c.copula.pool_window);
    }
    if (j.contains("range_split")) {
      const auto r = j["range_split"].get<std::string>();
      if (r == "test") c.range_source = RangeSource::test;
      else if (r == "train") c.range_source = RangeSource::train;
      else throw ConfigError("range_split must be 'test' or 'train'");
    }
    detail::read_opt(j, "sigma_levels", c.sigma_levels);
    if (j.contains("correlation")) {
      const auto k = j["correlation"].get<std::string>();
      if (k == "pearson") c.correlation = CorrelationKind::pearson;
      else if (k == "spearman") c.correlation = CorrelationKind::spearman;
      else throw ConfigError("correlation must be 'pearson' or 'spearman'");
    }
    detail::read_opt(j, "seeds", c.seeds);
    if (j.contains("output")) c.output = j["output"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(textio::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessSummary {
  std::size_t n_train = 0, n_validation = 0, n_test = 0;
  std::size_t input_dim = 0, output_dim = 0;
};

inline std::vector<RawSeries> load_source(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.synthetic) {
    SyntheticSpec spec = *cfg.synthetic;
    spec.seed = seed;
    spec.fractions = cfg.recipe.fractions;
    return generate_synthetic(spec);
  }
  return load_csv(cfg.csv, cfg.csv_channels);
}

/// Target channels must exist in the source before any work starts.
inline void check_targets(const RunConfig& cfg) {
  if (cfg.synthetic || cfg.recipe.target_channels.empty()) return;
  for (const auto& t : cfg.recipe.target_channels)
    if (std::find(cfg.csv_channels.begin(), cfg.csv_channels.end(), t) == cfg.csv_channels.end())
      throw ConfigError("target channel '" + t + "' is not in data.channels");
}

inline PreprocessSummary cmd_preprocess(const RunConfig& cfg, std::uint64_t seed) {
  check_targets(cfg);
  DatasetRecipe recipe = cfg.recipe;
  recipe.seed = seed;
  const auto ds = build_dataset(load_source(cfg, seed), recipe);
  save_dataset(cfg.seed_dir(seed) / "dataset", ds);
  PreprocessSummary s;
  s.n_train = ds.indices(Split::train).size();
  s.n_validation = ds.indices(Split::validation).size();
  s.n_test = ds.indices(Split::test).size();
  s.input_dim = static_cast<std::size_t>(ds.inputs.cols());
  s.output_dim = static_cast<std::size_t>(ds.targets.cols());
  return s;
}

// ---------------------------------------------------------------------------
// train

/// FNV-1a over the raw parameter bytes.
inline std::uint64_t checksum(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& l : net.layers()) {
    mix(l.weight.data(), l.weight.size());
    mix(l.bias.data(), l.bias.size());
  }
  return h;
}

/// Fails with a pointer to the stage that produces `what` when it is absent.
inline void require_stage(const fs::path& what, const char* stage) {
  if (!fs::exists(what))
    throw DataError(what.string() + " not found; run `rupi " + stage + "` first");
}

inline RueModel cmd_train(const RunConfig& cfg, std::uint64_t seed) {
  const auto dir = cfg.seed_dir(seed);
  require_stage(dir / "dataset", "preprocess");
  const auto ds = load_dataset(dir / "dataset", false);
  TrainConfig tc = cfg.train;
  tc.seed = seed;

  auto f = train_forecaster(ds, cfg.arch, tc);
  spdlog::info("seed {}: forecaster validation MSE {:.6g} after {} epochs", seed, f.val_loss,
               f.epochs_run);
  const auto before = checksum(f.encoder);
  auto d = train_decoder(f.encoder, ds, cfg.arch, tc);
  const auto after = checksum(f.encoder);
  spdlog::info("seed {}: decoder validation MSE {:.6g}; encoder checksum {:016x} -> {:016x}", seed,
               d.best_val_loss, before, after);
  if (before != after) throw NumericError("encoder parameters changed during decoder training");

  RueModel m{std::move(f.encoder), std::move(f.head), std::move(d.net), seed, f.val_loss,
             d.best_val_loss};
  m.check();
  textio::atomic_write(dir / "model.json", to_json(m).dump(2) + "\n");
  return m;
}

inline RueModel load_model(const fs::path& path) {
  return io::guarded(path, [](const nlohmann::json& j) { return model_from_json(j); });
}

// ---------------------------------------------------------------------------
// intervals

inline Matrix reconstruction_errors(const RueModel& m, const Matrix& x) {
  return (x - m.reconstruct(x)).cwiseAbs();
}

inline std::vector<double> row_sums(const Matrix& m) {
  std::vector<double> s(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) s[static_cast<std::size_t>(i)] = m.row(i).sum();
  return s;
}

struct IntervalsSummary {
  std::vector<std::string> written;
  std::map<std::string, std::string> failed;  // method → error message
  int first_failure_code = 0;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 3;
}

/// Calibrates each requested method on validation errors and writes test
/// intervals. A failing method is reported and skipped.
inline IntervalsSummary cmd_intervals(const RunConfig& cfg, std::uint64_t seed) {
  const auto dir = cfg.seed_dir(seed);
  require_stage(dir / "dataset", "preprocess");
  require_stage(dir / "model.json", "train");
  const auto ds = load_dataset(dir / "dataset", false);
  const auto model = load_model(dir / "model.json");

  const auto val = compute_errors(model, ds.input_rows(Split::validation),
                                  ds.target_rows(Split::validation));
  const auto test_rows = ds.indices(Split::test);
  if (test_rows.empty()) throw DataError("test split is empty");
  const Matrix x_test = ds.input_rows(Split::test);
  const Matrix pred = model.predict(x_test);
  const Matrix rho_test = reconstruction_errors(model, x_test);
  const auto rue_test = row_sums(rho_test);

  std::string unc = "row,rue\n";
  for (std::size_t i = 0; i < test_rows.size(); ++i)
    unc += std::to_string(test_rows[i]) + "," + textio::format_double(rue_test[i]) + "\n";
  textio::atomic_write(dir / "test_uncertainty.csv", unc);

  IntervalsSummary out;
  auto cp_entries = io::ojson::array();
  for (const auto& method : cfg.methods) {
    try {
      IntervalBatch b;
      if (method == "split_cp") {
        const auto c = split_cp_calibrate(val.err, cfg.alpha);
        cp_entries.push_back(io::to_json(c));
        b = split_cp_intervals(c, pred);
      } else if (method == "normalized_cp") {
        const auto c = normalized_cp_calibrate(val.err, val.rho_scalar, cfg.alpha);
        cp_entries.push_back(io::to_json(c));
        b = normalized_cp_intervals(c, pred, rue_test);
      } else if (method == "copula") {
        const auto c = copula_calibrate(val, cfg.alpha, cfg.copula);
        textio::atomic_write(dir / "copula.json", io::to_json(c).dump(2) + "\n");
        b = c.intervals(pred, rho_test);
      } else {
        const auto c = knn_calibrate(val, cfg.alpha, {cfg.knn_k, cfg.knn_standardize});
        textio::atomic_write(dir / "knn.json", io::to_json(c, cfg.knn_k).dump(2) + "\n");
        b = c.intervals(pred, rho_test);
      }
      textio::atomic_write(dir / ("intervals_" + method + ".csv"), io::intervals_csv(b, test_rows, ds));
      out.written.push_back(method);
    } catch (const Error& e) {
      spdlog::error("seed {}: {} failed: {}", seed, method, e.what());
      out.failed[method] = e.what();
      if (!out.first_failure_code) out.first_failure_code = exit_code_for(e);
    }
  }
  if (!cp_entries.empty()) {
    io::ojson doc;
    doc["methods"] = cp_entries;
    textio::atomic_write(dir / "calibration.json", doc.dump(2) + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// evaluate / report

struct EvaluateSummary {
  PiReport report;
  std::vector<std::string> missing;
  std::optional<UncertaintyMetrics> uncertainty;
};

inline std::vector<double> target_ranges(const Matrix& y) {
  std::vector<double> r(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    r[static_cast<std::size_t>(j)] = y.col(j).maxCoeff() - y.col(j).minCoeff();
    if (!(r[static_cast<std::size_t>(j)] > 0.0))
      throw DataError("output column " + std::to_string(j) + " has zero range");
  }
  return r;
}

inline std::vector<double> read_uncertainty(const fs::path& path,
                                            std::span<const Eigen::Index> rows) {
  std::map<Eigen::Index, double> by_row;
  std::istringstream in(textio::read_file(path));
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (textio::trim(line).empty()) continue;
    const auto f = textio::split_csv(line);
    double r, u;
    if (f.size() != 2 || !textio::parse_double(f[0], r) || !textio::parse_double(f[1], u))
      throw ParseError(path.string() + ": malformed row", line_no);
    by_row[static_cast<Eigen::Index>(r)] = u;
  }
  std::vector<double> out;
  for (auto r : rows) {
    auto it = by_row.find(r);
    if (it == by_row.end()) throw DataError(path.string() + ": missing row " + std::to_string(r));
    out.push_back(it->second);
  }
  return out;
}

inline io::ojson uncertainty_json(const UncertaintyMetrics& m, CorrelationKind kind) {
  io::ojson j;
  j["correlation_kind"] = kind == CorrelationKind::pearson ? "pearson" : "spearman";
  j["correlation"] = m.correlation ? io::number(*m.correlation) : io::ojson(nullptr);
  j["aurc"] = m.aurc;
  auto s = io::ojson::array();
  for (const auto& [sigma, v] : m.sigma_risk)
    s.push_back({{"sigma", sigma}, {"risk", v ? io::number(*v) : io::ojson(nullptr)}});
  j["sigma_risk"] = s;
  return j;
}

/// Scores the persisted intervals of one seed against the test targets.
inline EvaluateSummary evaluate_seed(const RunConfig& cfg, std::uint64_t seed) {
  const auto dir = cfg.seed_dir(seed);
  require_stage(dir / "dataset", "preprocess");
  const auto ds = load_dataset(dir / "dataset", true);
  const auto rows = ds.indices(Split::test);
  const Matrix y = ds.target_rows(Split::test);
  const auto ranges = target_ranges(cfg.range_source == RangeSource::test
                                        ? y
                                        : ds.target_rows(Split::train));
  std::vector<OutputLabel> labels;
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    labels.push_back({ds.target_channels[ds.target_channel(j)], ds.target_horizon(j)});

  EvaluateSummary out;
  std::map<std::string, IntervalBatch> batches;
  for (const auto& m : cfg.methods) {
    const auto path = dir / ("intervals_" + m + ".csv");
    if (!fs::exists(path)) {
      out.missing.push_back(m);
      continue;
    }
    batches.emplace(m, io::read_intervals(path, rows, ds, cfg.alpha, m));
  }
  if (batches.empty()) throw DataError("seed " + std::to_string(seed) + ": no interval files found");
  out.report = build_report(batches, y, ranges, labels, cfg.alpha);
  textio::atomic_write(dir / "report.csv", io::report_csv(out.report));
  textio::atomic_write(dir / "report.json", io::report_json(out.report, 1).dump(2) + "\n");

  const auto unc_path = dir / "test_uncertainty.csv";
  if (fs::exists(unc_path)) {
    const auto rue = read_uncertainty(unc_path, rows);
    const Matrix& pred = batches.begin()->second.prediction;
    std::vector<double> loss(rows.size());
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      loss[static_cast<std::size_t>(i)] = (y.row(i) - pred.row(i)).cwiseAbs().mean();
    out.uncertainty = uncertainty_metrics(loss, rue, cfg.sigma_levels, cfg.correlation);
    textio::atomic_write(dir / "uncertainty.json",
                         uncertainty_json(*out.uncertainty, cfg.correlation).dump(2) + "\n");
  }
  return out;
}

/// Aggregates every seed's report.csv into `<out>/report.csv|json`.
inline PiReport cmd_report(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  std::vector<PiReport> reports;
  for (auto s : seeds) {
    const auto path = cfg.seed_dir(s) / "report.csv";
    if (!fs::exists(path)) {
      spdlog::warn("seed {}: no report.csv, skipped", s);
      continue;
    }
    reports.push_back(io::read_report_csv(path));
  }
  if (reports.empty()) throw DataError("no per-seed reports to aggregate");
  auto agg = aggregate_reports(reports);
  textio::atomic_write(cfg.output / "report.csv", io::report_csv(agg));
  textio::atomic_write(cfg.output / "report.json", io::report_json(agg, reports.size()).dump(2) + "\n");
  return agg;
}

// ---------------------------------------------------------------------------
// sweep-k

struct SweepRow {
  std::size_t k = 0;
  PiMetrics metrics;
};

/// Chooses k without touching the test split: validation rows are shuffled
/// and halved, KNN is calibrated on one half and scored on the other.
inline std::vector<SweepRow> cmd_sweep_k(const RunConfig& cfg, std::uint64_t seed) {
  const auto dir = cfg.seed_dir(seed);
  require_stage(dir / "dataset", "preprocess");
  require_stage(dir / "model.json", "train");
  const auto ds = load_dataset(dir / "dataset", false);
  const auto model = load_model(dir / "model.json");
  auto idx = ds.indices(Split::validation);
  if (idx.size() < 4) throw DataError("sweep-k: validation split too small to halve");
  Rng rng(seed ^ 0x5eedULL);
  rng.shuffle(std::span<Eigen::Index>(idx));
  const std::size_t half = idx.size() / 2;
  const std::vector<Eigen::Index> cal_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<Eigen::Index> eval_idx(idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end());

  const Matrix xc = ds.inputs(cal_idx, Eigen::all), yc = ds.targets(cal_idx, Eigen::all);
  const Matrix xe = ds.inputs(eval_idx, Eigen::all), ye = ds.targets(eval_idx, Eigen::all);
  const auto cal = compute_errors(model, xc, yc);
  const Matrix pred = model.predict(xe);
  const Matrix rho_e = reconstruction_errors(model, xe);
  const auto ranges = target_ranges(ye);
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(ye.cols()));
  std::iota(cols.begin(), cols.end(), Eigen::Index{0});

  std::vector<SweepRow> out;
  std::string csv = "k,picp,covp,pinaw,pinafd,cwfdc\n";
  for (auto k : cfg.sweep_k) {
    if (k < 1 || k > half) {
      spdlog::warn("sweep-k: k = {} outside [1, {}], skipped", k, half);
      continue;
    }
    const KnnCalibration c(cal.rho, cal.err, cfg.alpha, {k, cfg.knn_standardize});
    const auto m = pooled_metrics(ye, c.intervals(pred, rho_e), ranges, cols, cfg.alpha);
    out.push_back({k, m});
    csv += std::to_string(k);
    for (double v : {m.picp, m.covp, m.pinaw, m.pinafd, m.cwfdc}) csv += "," + textio::format_double(v);
    csv += "\n";
  }
  textio::atomic_write(dir / "sweep_k.csv", csv);
  return out;
}

}  // namespace rupi
