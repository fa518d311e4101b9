// rupi: command-line driver for the forecasting + prediction-interval pipeline.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "rupi/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::string methods;
  std::optional<std::size_t> k;
  std::string out;
  bool quiet = false;
};

rupi::RunConfig resolve(const Flags& f) {
  auto cfg = rupi::load_run_config(f.config);
  if (f.alpha) cfg.alpha = *f.alpha;
  if (!f.methods.empty()) {
    cfg.methods.clear();
    std::stringstream ss(f.methods);
    std::string m;
    while (std::getline(ss, m, ','))
      if (!m.empty()) cfg.methods.emplace_back(rupi::textio::trim(m));
  }
  if (f.k) cfg.knn_k = *f.k;
  if (!f.out.empty()) cfg.output = f.out;
  if (f.seed) cfg.seeds = {*f.seed};
  cfg.validate();
  return cfg;
}

int run(const std::string& cmd, const Flags& flags) {
  const auto cfg = resolve(flags);
  int status = 0;
  if (cmd == "preprocess") {
    for (auto s : cfg.seeds) {
      const auto sum = rupi::cmd_preprocess(cfg, s);
      std::printf("seed %llu: train %zu, validation %zu, test %zu rows; I = %zu, O = %zu\n",
                  static_cast<unsigned long long>(s), sum.n_train, sum.n_validation, sum.n_test,
                  sum.input_dim, sum.output_dim);
    }
  } else if (cmd == "train") {
    for (auto s : cfg.seeds) {
      const auto m = rupi::cmd_train(cfg, s);
      std::printf("seed %llu: forecaster val MSE %.6g, decoder val MSE %.6g\n",
                  static_cast<unsigned long long>(s), m.forecaster_val_loss, m.decoder_val_loss);
    }
  } else if (cmd == "intervals") {
    for (auto s : cfg.seeds) {
      const auto sum = rupi::cmd_intervals(cfg, s);
      for (const auto& m : sum.written)
        std::printf("seed %llu: wrote intervals_%s.csv\n", static_cast<unsigned long long>(s), m.c_str());
      if (sum.written.empty() && sum.first_failure_code) status = sum.first_failure_code;
    }
  } else if (cmd == "evaluate" || cmd == "report") {
    if (cmd == "evaluate")
      for (auto s : cfg.seeds) {
        const auto ev = rupi::evaluate_seed(cfg, s);
        for (const auto& m : ev.missing)
          std::printf("seed %llu: missing intervals_%s.csv\n", static_cast<unsigned long long>(s), m.c_str());
        if (ev.uncertainty)
          std::printf("seed %llu: RUE AURC %.6g\n", static_cast<unsigned long long>(s), ev.uncertainty->aurc);
      }
    const auto agg = rupi::cmd_report(cfg, cfg.seeds);
    for (const auto& row : agg.rows)
      if (row.output == rupi::kPooledOutput && row.horizon == 0)
        std::printf("%-14s %-7s %.6g ± %.3g\n", row.method.c_str(), row.metric.c_str(), row.value, row.std);
  } else if (cmd == "sweep-k") {
    for (auto s : cfg.seeds)
      for (const auto& r : rupi::cmd_sweep_k(cfg, s))
        std::printf("seed %llu: k = %zu  picp %.4f  cwfdc %.6g\n", static_cast<unsigned long long>(s),
                    r.k, r.metrics.picp, r.metrics.cwfdc);
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction-conditioned prediction intervals for time-series forecasts"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_flag("-q,--quiet", flags.quiet, "Only print warnings and errors");

  const char* commands[][2] = {
      {"preprocess", "Build the windowed dataset for each seed"},
      {"train", "Train forecaster, then decoder on the frozen encoder"},
      {"intervals", "Calibrate on validation errors and write test intervals"},
      {"evaluate", "Score intervals against test targets and aggregate over seeds"},
      {"report", "Re-aggregate existing per-seed reports"},
      {"sweep-k", "Score KNN intervals for several k on halves of the validation split"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Run a single seed instead of the configured list");
    sub->add_option("--alpha", flags.alpha, "Miscoverage level (default 0.05)");
    sub->add_option("--methods", flags.methods, "Comma list of split_cp,normalized_cp,copula,knn");
    sub->add_option("--k", flags.k, "KNN neighbourhood size override");
    sub->add_option("--out", flags.out, "Output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(flags.quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    return run(cmd, flags);
  } catch (const rupi::Error& e) {
    spdlog::error("{}", e.what());
    return rupi::exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
}
