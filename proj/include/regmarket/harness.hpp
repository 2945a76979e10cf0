#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regmarket/dataset.hpp"
#include "regmarket/forest.hpp"
#include "regmarket/market.hpp"
#include "regmarket/stats.hpp"

namespace regmarket {

enum class Experiment { kTable1, kTable2 };
enum class KernelChoice { kDelta, kGaussian, kBoth };
enum class ReportFormat { kCsv, kMarkdown };

/// Where the rows come from: a CSV file (optionally with a fixed test file)
/// or one of the Friedman generators, which produce a fixed train/test pair.
struct DataSource {
  std::string data;       // CSV path or "friedman1" | "friedman2" | "friedman3"
  std::string test_data;  // optional CSV with a provided test set
  std::string target;     // response column for CSV input
  char delimiter = ',';
  std::size_t synthetic_train = 200;
  std::size_t synthetic_test = 2000;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::kTable1;
  DataSource source;
  std::size_t runs = 100;
  double test_fraction = 0.1;
  ForestParams forest;                       // seed is replaced per run
  std::uint32_t depth_cap = kUnboundedDepth;  // participant depth for markets and RF
  std::size_t epochs = 50;
  KernelChoice kernel = KernelChoice::kBoth;
  int quad_points = 5;
  std::vector<double> alpha_grid = default_alpha_grid();
  std::size_t sigma_folds = 2;
  std::optional<double> sigma;               // skip cross validation when set
  double eta = 0.0;                          // <= 0: 10 / N_train per run
  bool shuffle = false;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  double significance = 0.01;
  std::optional<double> published_mse;       // reference figure for the +/- annotation
  std::size_t timing_repetitions = 5;
};

/// Defaults for each experiment: table2 grows depth-10 trees and caps at 5.
ExperimentConfig default_config(Experiment experiment);

struct MethodResult {
  std::string label;                  // "RF", "DM" or "GM"
  std::vector<double> run_mse;        // per run; markets: lowest test MSE over epochs
  std::vector<double> run_final_mse;  // per run; markets: last epoch
  std::vector<std::size_t> run_best_epoch;
  std::vector<double> mean_train_curve;  // per epoch, averaged over runs
  std::vector<double> mean_test_curve;
  double mean = 0.0;
  double sd = 0.0;
  std::optional<TestResult> vs_rf;         // paired test against RF
  std::optional<TestResult> vs_published;  // one-sample test against published_mse
};

struct TimingResult {
  std::uint32_t deep_cap = 0;
  std::uint32_t shallow_cap = 0;
  std::size_t rows_timed = 0;
  double deep_seconds = 0.0;     // mean over runs of the median repetition
  double shallow_seconds = 0.0;
  double speedup = 0.0;          // deep / shallow
};

struct DatasetReport {
  std::string dataset;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t features = 0;
  ResponseRange range;
  std::size_t runs = 0;
  double eta = 0.0;  // learning rate of run 1
  bool eta_clamped = false;
  std::uint32_t depth_cap = kUnboundedDepth;
  std::vector<MethodResult> methods;
  std::optional<SigmaSelection> sigma;
  std::optional<TimingResult> timing;
  std::size_t skipped_updates = 0;

  const MethodResult* method(std::string_view label) const;
};

struct ExperimentReport {
  Experiment experiment = Experiment::kTable1;
  std::vector<DatasetReport> rows;
};

using ProgressFn = std::function<void(std::string_view)>;

/// Fully grown forests; RF baseline plus delta and Gaussian markets.
ExperimentReport run_table1(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Depth-capped evaluation of depth-limited forests, with evaluation timing.
ExperimentReport run_table2(const ExperimentConfig& config, const ProgressFn& progress = {});

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Table text. Without timing the speedup and time cells read "-", which makes
/// the output a pure function of the config.
std::string render_report(const ExperimentReport& report, ReportFormat format, bool include_timing = true);

void emit_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& path,
                 bool include_timing = true);

/// Per-epoch mean curves: dataset,method,epoch,train_mse,test_mse.
std::string render_curves(const ExperimentReport& report);

/// Annotation for one method: '*' / '!' for significantly better / worse than
/// RF, '+' / '-' for better / worse than the published figure.
std::string annotation(const MethodResult& method);

/// Runs `count` independent tasks on up to `jobs` threads. Exceptions are
/// rethrown after all workers stop, tagged with the failing task index.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

}  // namespace regmarket
