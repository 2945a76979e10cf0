#include "regmarket/harness.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "regmarket/format.hpp"

namespace regmarket {

ExperimentConfig default_config(Experiment experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == Experiment::kTable2) {
    c.forest.max_depth = 10;
    c.depth_cap = 5;
  }
  return c;
}

const MethodResult* DatasetReport::method(std::string_view label) const {
  for (const auto& m : methods)
    if (m.label == label) return &m;
  return nullptr;
}

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::size_t error_index = 0;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error || i < error_index) {
          error = std::current_exception();
          error_index = i;
        }
        failed = true;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw std::runtime_error("run " + std::to_string(error_index + 1) + " failed: " + e.what());
    }
  }
}

namespace {

struct LoadedData {
  std::optional<Dataset> full;   // random splits are drawn from this
  std::optional<Dataset> train;  // fixed train/test pair
  std::optional<Dataset> test;
};

LoadedData load_source(const ExperimentConfig& config) {
  const DataSource& src = config.source;
  LoadedData out;
  if (friedman_id(src.data) != 0) {
    Rng rng = make_rng(config.seed, stream_tag("data"));
    out.train = generate_friedman(src.data, src.synthetic_train, rng);
    out.test = generate_friedman(src.data, src.synthetic_test, rng);
    return out;
  }
  if (src.data.empty()) throw std::invalid_argument("no data source given");
  if (src.target.empty()) throw std::invalid_argument("CSV input needs a target column");
  if (!src.test_data.empty()) {
    out.train = load_csv(src.data, src.target, src.delimiter);
    out.test = load_csv(src.test_data, src.target, src.delimiter);
    if (out.train->cols() != out.test->cols())
      throw std::invalid_argument("train and test files have different feature counts");
    return out;
  }
  out.full = load_csv(src.data, src.target, src.delimiter);
  return out;
}

std::pair<Dataset, Dataset> run_split(const ExperimentConfig& config, const LoadedData& data, std::size_t run) {
  if (data.full) {
    Rng rng = make_rng(derive_seed(config.seed, stream_tag("split")), run);
    auto split = random_split(*data.full, config.test_fraction, rng);
    return {std::move(split.train), std::move(split.test)};
  }
  return {*data.train, *data.test};
}

std::uint64_t forest_seed(const ExperimentConfig& config, std::size_t run) {
  return derive_seed(derive_seed(config.seed, stream_tag("forest")), run);
}

struct RunOutput {
  double rf = 0.0;
  double rf_deep = 0.0;
  std::optional<TrainingCurve> dm;
  std::optional<TrainingCurve> gm;
  double eta = 0.0;
  bool eta_clamped = false;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::shared_ptr<const Forest> forest;  // kept for timing only
  std::optional<Dataset> timed;
};

bool wants_delta(KernelChoice k) { return k != KernelChoice::kGaussian; }
bool wants_gauss(KernelChoice k) { return k != KernelChoice::kDelta; }

RunOutput execute_run(const ExperimentConfig& config, const LoadedData& data, std::size_t run,
                      std::optional<double> sigma, bool keep_for_timing) {
  auto [train, test] = run_split(config, data, run);
  ForestParams params = config.forest;
  params.seed = forest_seed(config, run);
  auto forest = std::make_shared<const Forest>(grow_forest(train, params));

  RunOutput out;
  out.n_train = train.rows();
  out.n_test = test.rows();
  out.rf = mse(forest_predict(*forest, test, config.depth_cap), test.responses());
  out.rf_deep = mse(forest_predict(*forest, test, kUnboundedDepth), test.responses());
  double eta = config.eta > 0.0 ? config.eta : default_eta(train.rows());
  if (eta > 1.0) {
    eta = 1.0;
    out.eta_clamped = true;
  }
  out.eta = eta;
  TrainOptions options{config.shuffle, derive_seed(config.seed, run)};
  if (wants_delta(config.kernel)) {
    ForestMarket market(forest, config.depth_cap, eta, DeltaKernel{});
    out.dm = train_epochs(market, train, test, config.epochs, options);
  }
  if (wants_gauss(config.kernel)) {
    ForestMarket market(forest, config.depth_cap, eta, gaussian_kernel(*sigma, config.quad_points));
    out.gm = train_epochs(market, train, test, config.epochs, options);
  }
  if (keep_for_timing) {
    out.forest = forest;
    out.timed = train.rows() >= test.rows() ? std::move(train) : std::move(test);
  }
  return out;
}

double time_evaluation(const Forest& forest, const Dataset& data, std::uint32_t cap, std::size_t reps) {
  std::vector<double> seconds;
  volatile double sink = 0.0;
  for (std::size_t r = 0; r < std::max<std::size_t>(reps, 1); ++r) {
    const auto start = std::chrono::steady_clock::now();
    double acc = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) acc += forest_predict(forest, data.row(i), cap);
    const auto stop = std::chrono::steady_clock::now();
    sink = sink + acc;
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(seconds.begin(), seconds.end());
  return seconds[seconds.size() / 2];
}

MethodResult summarize_method(std::string label, std::vector<double> best, std::vector<double> final_mse,
                              const std::vector<const TrainingCurve*>& curves) {
  MethodResult m;
  m.label = std::move(label);
  m.run_mse = std::move(best);
  m.run_final_mse = std::move(final_mse);
  m.mean = mean(m.run_mse);
  m.sd = sample_sd(m.run_mse);
  if (!curves.empty()) {
    const std::size_t epochs = curves.front()->test_mse.size();
    m.mean_train_curve.assign(epochs, 0.0);
    m.mean_test_curve.assign(epochs, 0.0);
    for (const auto* c : curves) {
      m.run_best_epoch.push_back(c->best_epoch);
      for (std::size_t e = 0; e < epochs; ++e) {
        m.mean_train_curve[e] += c->train_mse[e] / static_cast<double>(curves.size());
        m.mean_test_curve[e] += c->test_mse[e] / static_cast<double>(curves.size());
      }
    }
  }
  return m;
}

void validate(const ExperimentConfig& c) {
  if (c.runs == 0) throw std::invalid_argument("runs must be at least 1");
  if (c.epochs == 0) throw std::invalid_argument("epochs must be at least 1");
  if (c.forest.trees == 0) throw std::invalid_argument("trees must be at least 1");
  if (c.sigma && !(*c.sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
}

ExperimentReport run(const ExperimentConfig& config, bool timed, const ProgressFn& progress) {
  validate(config);
  const LoadedData data = load_source(config);
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  std::optional<SigmaSelection> selection;
  std::optional<double> sigma = config.sigma;
  if (wants_gauss(config.kernel) && !sigma) {
    // Bandwidth chosen once on the first run's training set, then frozen.
    auto [train, test] = run_split(config, data, 0);
    SigmaSearch search;
    search.alpha_grid = config.alpha_grid;
    search.folds = config.sigma_folds;
    search.epochs = config.epochs;
    search.quadrature_points = config.quad_points;
    search.depth_cap = config.depth_cap;
    search.eta = config.eta;
    ForestParams params = config.forest;
    params.seed = forest_seed(config, 0);
    Rng rng = make_rng(config.seed, stream_tag("sigma"));
    selection = select_sigma(train, params, search, rng);
    sigma = selection->sigma;
    say("sigma = " + format_double(selection->sigma) + " (alpha " + format_double(selection->alpha) + ")");
  }

  std::vector<RunOutput> outputs(config.runs);
  std::mutex progress_mutex;
  std::size_t finished = 0;
  parallel_for(config.runs, config.jobs, [&](std::size_t r) {
    outputs[r] = execute_run(config, data, r, sigma, timed);
    std::lock_guard lock(progress_mutex);
    ++finished;
    say("run " + std::to_string(finished) + "/" + std::to_string(config.runs) + " done");
  });

  DatasetReport row;
  row.dataset = friedman_id(config.source.data) != 0
                    ? config.source.data
                    : std::filesystem::path(config.source.data).stem().string();
  row.n_train = outputs.front().n_train;
  row.n_test = outputs.front().n_test;
  row.features = data.full ? data.full->cols() : data.train->cols();
  if (data.full) {
    row.range = data.full->response_range();
  } else {
    const auto& a = data.train->response_range();
    const auto& b = data.test->response_range();
    row.range = {std::min(a.min, b.min), std::max(a.max, b.max)};
  }
  row.runs = config.runs;
  row.eta = outputs.front().eta;
  row.eta_clamped = outputs.front().eta_clamped;
  row.depth_cap = config.depth_cap;
  row.sigma = selection;
  if (!selection && sigma) {
    SigmaSelection fixed;
    fixed.sigma = *sigma;
    row.sigma = fixed;
  }

  std::vector<double> rf;
  for (const auto& o : outputs) rf.push_back(o.rf);
  row.methods.push_back(summarize_method("RF", rf, rf, {}));
  if (timed) {
    std::vector<double> deep;
    for (const auto& o : outputs) deep.push_back(o.rf_deep);
    row.methods.push_back(summarize_method("RF_deep", deep, deep, {}));
  }

  auto add_market = [&](const char* label, std::optional<TrainingCurve> RunOutput::*field) {
    std::vector<double> best, last;
    std::vector<const TrainingCurve*> curves;
    for (const auto& o : outputs) {
      const auto& c = *(o.*field);
      best.push_back(c.best_test_mse);
      last.push_back(c.final_test_mse);
      curves.push_back(&c);
      row.skipped_updates += c.skipped;
    }
    row.methods.push_back(summarize_method(label, best, last, curves));
  };
  if (wants_delta(config.kernel)) add_market("DM", &RunOutput::dm);
  if (wants_gauss(config.kernel)) add_market("GM", &RunOutput::gm);

  if (config.runs >= 2) {
    const auto& rf_runs = row.methods.front().run_mse;
    for (auto& m : row.methods) {
      if (m.label != "RF") m.vs_rf = paired_t_test(m.run_mse, rf_runs, config.significance);
      if (config.published_mse) m.vs_published = one_sample_t_test(m.run_mse, *config.published_mse, config.significance);
    }
  }

  if (timed) {
    say("timing depth-capped evaluation");
    TimingResult timing;
    timing.deep_cap = config.forest.max_depth;
    timing.shallow_cap = config.depth_cap;
    for (const auto& o : outputs) {
      timing.rows_timed = o.timed->rows();
      timing.deep_seconds += time_evaluation(*o.forest, *o.timed, timing.deep_cap, config.timing_repetitions);
      timing.shallow_seconds += time_evaluation(*o.forest, *o.timed, timing.shallow_cap, config.timing_repetitions);
    }
    timing.deep_seconds /= static_cast<double>(outputs.size());
    timing.shallow_seconds /= static_cast<double>(outputs.size());
    timing.speedup = timing.shallow_seconds > 0.0 ? timing.deep_seconds / timing.shallow_seconds : 0.0;
    row.timing = timing;
  }

  ExperimentReport report;
  report.experiment = config.experiment;
  report.rows.push_back(std::move(row));
  return report;
}

}  // namespace

ExperimentReport run_table1(const ExperimentConfig& config, const ProgressFn& progress) {
  ExperimentConfig c = config;
  c.experiment = Experiment::kTable1;
  return run(c, false, progress);
}

ExperimentReport run_table2(const ExperimentConfig& config, const ProgressFn& progress) {
  ExperimentConfig c = config;
  c.experiment = Experiment::kTable2;
  if (c.forest.max_depth == kUnboundedDepth)
    throw std::invalid_argument("table2 needs a bounded max depth (default 10)");
  return run(c, true, progress);
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  return config.experiment == Experiment::kTable2 ? run_table2(config, progress) : run_table1(config, progress);
}

std::string annotation(const MethodResult& method) {
  std::string s;
  if (method.vs_rf) {
    if (method.vs_rf->verdict == Verdict::kFirstBetter) s += '*';
    if (method.vs_rf->verdict == Verdict::kSecondBetter) s += '!';
  }
  if (method.vs_published) {
    if (method.vs_published->verdict == Verdict::kFirstBetter) s += '+';
    if (method.vs_published->verdict == Verdict::kSecondBetter) s += '-';
  }
  return s;
}

namespace {

std::string general(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 6);
  return std::string(buf.data(), ptr);
}

const std::vector<std::string> kColumns = {"dataset", "N_train",  "N_test",  "F",        "Y",        "RF",
                                           "DM",      "GM",       "annotations", "speedup", "RF_sd", "DM_sd",
                                           "GM_sd",   "DM_final", "GM_final", "sigma",    "eta",   "runs",
                                           "depth_cap", "RF_deep", "deep_ms", "shallow_ms"};

std::vector<std::string> cells(const DatasetReport& row, bool include_timing) {
  auto value = [&](std::string_view label, auto pick) -> std::string {
    const MethodResult* m = row.method(label);
    return m ? pick(*m) : std::string("-");
  };
  auto mean_of = [](const MethodResult& m) { return general(m.mean); };
  auto sd_of = [](const MethodResult& m) { return general(m.sd); };
  auto final_of = [](const MethodResult& m) { return general(mean(m.run_final_mse)); };

  std::string notes;
  for (const auto& m : row.methods) {
    auto a = annotation(m);
    if (a.empty()) continue;
    if (!notes.empty()) notes += ' ';
    notes += m.label + ":" + a;
  }
  const bool timed = include_timing && row.timing.has_value();
  return {row.dataset,
          std::to_string(row.n_train),
          std::to_string(row.n_test),
          std::to_string(row.features),
          "[" + format_fixed(row.range.min, 2) + "," + format_fixed(row.range.max, 2) + "]",
          value("RF", mean_of),
          value("DM", mean_of),
          value("GM", mean_of),
          notes.empty() ? "-" : notes,
          timed ? format_fixed(row.timing->speedup, 2) : "-",
          value("RF", sd_of),
          value("DM", sd_of),
          value("GM", sd_of),
          value("DM", final_of),
          value("GM", final_of),
          row.sigma ? general(row.sigma->sigma) : "-",
          general(row.eta),
          std::to_string(row.runs),
          row.depth_cap == kUnboundedDepth ? "unbounded" : std::to_string(row.depth_cap),
          value("RF_deep", mean_of),
          timed ? format_fixed(row.timing->deep_seconds * 1e3, 3) : "-",
          timed ? format_fixed(row.timing->shallow_seconds * 1e3, 3) : "-"};
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string render_report(const ExperimentReport& report, ReportFormat format, bool include_timing) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& row) {
    if (format == ReportFormat::kCsv) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
      out << '\n';
    } else {
      out << '|';
      for (const auto& c : row) out << ' ' << c << " |";
      out << '\n';
    }
  };
  line(kColumns);
  if (format == ReportFormat::kMarkdown) line(std::vector<std::string>(kColumns.size(), "---"));
  for (const auto& row : report.rows) line(cells(row, include_timing));
  return out.str();
}

void emit_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& path,
                 bool include_timing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report to '" + path.string() + "'");
  out << render_report(report, format, include_timing);
  if (!out) throw std::runtime_error("failed writing report to '" + path.string() + "'");
}

std::string render_curves(const ExperimentReport& report) {
  std::ostringstream out;
  out << "dataset,method,epoch,train_mse,test_mse\n";
  for (const auto& row : report.rows)
    for (const auto& m : row.methods)
      for (std::size_t e = 0; e < m.mean_test_curve.size(); ++e)
        out << row.dataset << ',' << m.label << ',' << (e + 1) << ',' << format_double(m.mean_train_curve[e]) << ','
            << format_double(m.mean_test_curve[e]) << '\n';
  return out.str();
}

}  // namespace regmarket
