// regmarket: train regression-market ensembles over random-feature forests and
// run the benchmark experiments.
//
//   regmarket run --experiment table1 --data data/housing.csv --target MEDV --out housing.csv
//   regmarket run --experiment table2 --data friedman1 --runs 20 --format markdown --out f1.md
//   regmarket grow --data data/housing.csv --target MEDV --out forest.txt
//   regmarket train --forest forest.txt --data data/housing.csv --target MEDV --kernel gauss --sigma 2 --out m.txt

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "regmarket/format.hpp"
#include "regmarket/harness.hpp"

namespace rm = regmarket;

namespace {

std::uint32_t parse_depth(const std::string& text, const char* flag) {
  if (text == "unbounded" || text == "inf") return rm::kUnboundedDepth;
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw CLI::ValidationError(flag, "expected a depth or 'unbounded', got '" + text + "'");
  return v;
}

double parse_number(const std::string& text, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw CLI::ValidationError(what, "not a number: '" + text + "'");
  return v;
}

// "start:step:stop" or a comma-separated list.
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    auto a = text.find(':');
    auto b = text.find(':', a + 1);
    if (b == std::string::npos) throw CLI::ValidationError("--alpha-grid", "expected start:step:stop");
    double start = parse_number(text.substr(0, a), "--alpha-grid");
    double step = parse_number(text.substr(a + 1, b - a - 1), "--alpha-grid");
    double stop = parse_number(text.substr(b + 1), "--alpha-grid");
    if (!(step > 0.0)) throw CLI::ValidationError("--alpha-grid", "step must be positive");
    auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long k = 0; k <= count; ++k) grid.push_back(start + step * static_cast<double>(k));
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto next = text.find(',', pos);
      if (next == std::string::npos) next = text.size();
      grid.push_back(parse_number(text.substr(pos, next - pos), "--alpha-grid"));
      pos = next + 1;
    }
  }
  if (grid.empty()) throw CLI::ValidationError("--alpha-grid", "empty grid");
  return grid;
}

struct CommonData {
  std::string data;
  std::string test_data;
  std::string target;
  std::string delimiter = ",";
  std::size_t train_size = 200;
  std::size_t test_size = 2000;
};

void add_data_options(CLI::App* app, CommonData& d) {
  app->add_option("--data", d.data, "CSV file or friedman1|friedman2|friedman3")->required();
  app->add_option("--test-data", d.test_data, "CSV file with a provided test set (no random splits)");
  app->add_option("--target", d.target, "Response column name or 0-based index (CSV input)");
  app->add_option("--delimiter", d.delimiter, "CSV field delimiter")->capture_default_str();
  app->add_option("--train-size", d.train_size, "Rows generated for synthetic training data")->capture_default_str();
  app->add_option("--test-size", d.test_size, "Rows generated for synthetic test data")->capture_default_str();
}

rm::DataSource to_source(const CommonData& d) {
  if (d.delimiter.size() != 1) throw CLI::ValidationError("--delimiter", "must be a single character");
  return {d.data, d.test_data, d.target, d.delimiter[0], d.train_size, d.test_size};
}

// Loads the training (and optional test) rows for grow/train.
std::pair<rm::Dataset, std::optional<rm::Dataset>> load_for_tool(const CommonData& d, std::uint64_t seed) {
  auto src = to_source(d);
  if (rm::friedman_id(src.data) != 0) {
    rm::Rng rng = rm::make_rng(seed, rm::stream_tag("data"));
    auto train = rm::generate_friedman(src.data, src.synthetic_train, rng);
    auto test = rm::generate_friedman(src.data, src.synthetic_test, rng);
    return {std::move(train), std::move(test)};
  }
  if (src.target.empty()) throw CLI::ValidationError("--target", "required for CSV input");
  auto train = rm::load_csv(src.data, src.target, src.delimiter);
  if (src.test_data.empty()) return {std::move(train), std::nullopt};
  return {std::move(train), rm::load_csv(src.test_data, src.target, src.delimiter)};
}

// Expands `--config <file>` into flags placed right after the subcommand, ahead
// of the flags given on the command line.
std::vector<std::string> with_config(CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  auto at = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
  if (at == args.end() || args.size() < 2) return args;
  std::string path;
  if (*at == "--config") {
    if (at + 1 == args.end()) return args;  // let the parser report the missing value
    path = *(at + 1);
    args.erase(at, at + 2);
  } else {
    path = at->substr(9);
    args.erase(at);
  }
  CLI::App* sub = app.get_subcommand_no_throw(args[1]);
  if (sub == nullptr) throw CLI::ValidationError("--config", "a subcommand must come first");
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  std::vector<std::string> injected;
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == "default"))
      throw CLI::ConfigError("sections are not supported: " + item.fullname());
    if (item.name == "++" || item.name == "--") continue;
    const CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw CLI::ConfigError::NotConfigurable(item.name);
    if (opt->get_expected_min() == 0) {
      // flag: only a true value switches it on
      if (item.inputs.empty() || item.inputs[0] == "true" || item.inputs[0] == "1") injected.push_back("--" + item.name);
      continue;
    }
    injected.push_back("--" + item.name);
    std::string value;
    for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
    injected.push_back(value);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression prediction markets over random-feature forests"};
  app.require_subcommand(1);
  // Later values win, so command-line flags override config file keys.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  // run
  auto* run = app.add_subcommand("run", "Run a benchmark experiment and write the result table");
  run->add_option("--config", config_path, "Flat key = value file; keys match the long flag names");
  CommonData run_data;
  std::string experiment = "table1";
  std::size_t runs = 100;
  double test_fraction = 0.1;
  rm::ForestParams forest;
  std::string max_depth;
  std::string depth_cap;
  std::size_t epochs = 50;
  std::string kernel = "both";
  int quad_points = 5;
  std::string alpha_grid = "0.05:0.05:1.0";
  std::string eta = "auto";
  double sigma = 0.0;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
  std::string curves;
  std::size_t jobs = 1;
  double published = 0.0;
  bool shuffle = false;
  bool no_timing = false;

  run->add_option("--experiment", experiment, "table1 (fully grown trees) or table2 (shallow-tree study)")
      ->check(CLI::IsMember({"table1", "table2"}))
      ->capture_default_str();
  add_data_options(run, run_data);
  run->add_option("--runs", runs, "Number of runs (random splits or forest reseeds)")->capture_default_str();
  run->add_option("--test-fraction", test_fraction, "Share of rows held out per random split")->capture_default_str();
  run->add_option("--trees", forest.trees, "Trees per forest")->capture_default_str();
  run->add_option("--candidates", forest.candidates, "Random features tried per node")->capture_default_str();
  run->add_option("--pool", forest.pool_size, "Random features generated per forest")->capture_default_str();
  run->add_option("--min-split", forest.min_split, "Nodes with fewer samples are not split")->capture_default_str();
  run->add_option("--max-depth", max_depth, "Tree depth limit or 'unbounded' (default: table1 unbounded, table2 10)");
  run->add_option("--depth-cap", depth_cap, "Evaluation depth cap (default: table1 unbounded, table2 5)");
  run->add_flag("--bootstrap", forest.bootstrap, "Grow each tree on a bootstrap resample");
  run->add_option("--epochs", epochs, "Market training epochs")->capture_default_str();
  run->add_option("--kernel", kernel, "Reward kernel(s) to train")
      ->check(CLI::IsMember({"delta", "gauss", "both"}))
      ->capture_default_str();
  run->add_option("--quad-points", quad_points, "Hermite-Gauss points for the Gaussian kernel")
      ->check(CLI::Range(1, rm::kMaxQuadraturePoints))
      ->capture_default_str();
  run->add_option("--alpha-grid", alpha_grid, "Bandwidth grid start:step:stop or a,b,c")->capture_default_str();
  run->add_option("--sigma", sigma, "Fixed Gaussian kernel bandwidth (skips cross validation)");
  run->add_option("--eta", eta, "Learning rate or 'auto' (10 / N_train)")->capture_default_str();
  run->add_flag("--shuffle", shuffle, "Shuffle the training order once per run");
  run->add_option("--seed", seed, "Master seed")->capture_default_str();
  run->add_option("--out", out, "Report path")->required();
  run->add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "markdown"}))->capture_default_str();
  run->add_option("--curves", curves, "Optional CSV of mean per-epoch MSE curves");
  run->add_option("--published-mse", published, "Published reference MSE for the +/- annotation");
  run->add_option("--jobs", jobs, "Runs executed concurrently")->capture_default_str();
  run->add_flag("--no-timing", no_timing, "Leave timing cells empty (byte-reproducible report)");

  // grow
  auto* grow = app.add_subcommand("grow", "Grow a forest on a dataset and save it");
  grow->add_option("--config", config_path, "Flat key = value file; keys match the long flag names");
  CommonData grow_data;
  rm::ForestParams grow_params;
  std::string grow_depth = "unbounded";
  std::string grow_out;
  add_data_options(grow, grow_data);
  grow->add_option("--trees", grow_params.trees, "Trees per forest")->capture_default_str();
  grow->add_option("--candidates", grow_params.candidates, "Random features tried per node")->capture_default_str();
  grow->add_option("--pool", grow_params.pool_size, "Random features generated per forest")->capture_default_str();
  grow->add_option("--min-split", grow_params.min_split, "Nodes with fewer samples are not split")->capture_default_str();
  grow->add_option("--max-depth", grow_depth, "Tree depth limit or 'unbounded'")->capture_default_str();
  grow->add_flag("--bootstrap", grow_params.bootstrap, "Grow each tree on a bootstrap resample");
  grow->add_option("--seed", grow_params.seed, "Forest seed")->capture_default_str();
  grow->add_option("--out", grow_out, "Forest file")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a market on a saved forest");
  train->add_option("--config", config_path, "Flat key = value file; keys match the long flag names");
  CommonData train_data;
  std::string forest_path;
  std::string train_cap = "unbounded";
  std::string train_kernel = "delta";
  double train_sigma = 0.0;
  int train_points = 5;
  std::size_t train_epochs = 50;
  std::string train_eta = "auto";
  std::uint64_t train_seed = 1;
  std::string market_in;
  std::string market_out;
  add_data_options(train, train_data);
  train->add_option("--forest", forest_path, "Forest file from 'grow'")->required();
  train->add_option("--depth-cap", train_cap, "Participant depth cap or 'unbounded'")->capture_default_str();
  train->add_option("--kernel", train_kernel, "Reward kernel")->check(CLI::IsMember({"delta", "gauss"}))->capture_default_str();
  train->add_option("--sigma", train_sigma, "Gaussian kernel bandwidth");
  train->add_option("--quad-points", train_points, "Hermite-Gauss points")->check(CLI::Range(1, rm::kMaxQuadraturePoints));
  train->add_option("--epochs", train_epochs, "Training epochs")->capture_default_str();
  train->add_option("--eta", train_eta, "Learning rate or 'auto'")->capture_default_str();
  train->add_option("--seed", train_seed, "Seed for synthetic data")->capture_default_str();
  train->add_option("--resume", market_in, "Start from a saved market state");
  train->add_option("--out", market_out, "Market state file")->required();

  try {
    auto args = with_config(app, argc, argv);
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) {
      auto exp = experiment == "table2" ? rm::Experiment::kTable2 : rm::Experiment::kTable1;
      rm::ExperimentConfig config = rm::default_config(exp);
      config.source = to_source(run_data);
      config.runs = runs;
      config.test_fraction = test_fraction;
      forest.max_depth = config.forest.max_depth;
      config.forest = forest;
      if (!max_depth.empty()) config.forest.max_depth = parse_depth(max_depth, "--max-depth");
      if (!depth_cap.empty()) config.depth_cap = parse_depth(depth_cap, "--depth-cap");
      config.epochs = epochs;
      config.kernel = kernel == "delta"   ? rm::KernelChoice::kDelta
                      : kernel == "gauss" ? rm::KernelChoice::kGaussian
                                          : rm::KernelChoice::kBoth;
      config.quad_points = quad_points;
      config.alpha_grid = parse_grid(alpha_grid);
      if (run->count("--sigma") > 0) config.sigma = sigma;
      config.eta = eta == "auto" ? 0.0 : parse_number(eta, "--eta");
      config.shuffle = shuffle;
      config.seed = seed;
      config.jobs = jobs;
      if (run->count("--published-mse") > 0) config.published_mse = published;

      auto report = rm::run_experiment(config, [](std::string_view msg) { std::cerr << msg << '\n'; });
      const auto& row = report.rows.front();
      if (row.eta_clamped) std::cerr << "warning: learning rate clamped to 1\n";
      rm::emit_report(report, format == "markdown" ? rm::ReportFormat::kMarkdown : rm::ReportFormat::kCsv, out,
                      !no_timing);
      if (!curves.empty()) {
        std::ofstream c(curves, std::ios::binary);
        if (!c) throw std::runtime_error("cannot write '" + curves + "'");
        c << rm::render_curves(report);
      }
      std::cout << rm::render_report(report, rm::ReportFormat::kMarkdown, !no_timing);
      return 0;
    }

    if (*grow) {
      grow_params.max_depth = parse_depth(grow_depth, "--max-depth");
      auto [data, test] = load_for_tool(grow_data, grow_params.seed);
      auto f = rm::grow_forest(data, grow_params);
      rm::save_forest(f, grow_out);
      std::size_t nodes = 0;
      for (const auto& t : f.trees()) nodes += t.size();
      std::cout << "grew " << f.size() << " trees (" << nodes << " nodes) on " << data.rows() << " rows\n";
      return 0;
    }

    if (*train) {
      auto f = std::make_shared<const rm::Forest>(rm::load_forest(forest_path));
      auto [data, test] = load_for_tool(train_data, train_seed);
      double e = train_eta == "auto" ? rm::default_eta(data.rows()) : parse_number(train_eta, "--eta");
      if (e > 1.0) {
        std::cerr << "warning: learning rate clamped to 1\n";
        e = 1.0;
      }
      rm::RewardKernel k = rm::DeltaKernel{};
      if (train_kernel == "gauss") {
        if (!(train_sigma > 0.0)) throw CLI::ValidationError("--sigma", "a positive bandwidth is required");
        k = rm::gaussian_kernel(train_sigma, train_points);
      }
      auto market = market_in.empty() ? rm::ForestMarket(f, parse_depth(train_cap, "--depth-cap"), e, k)
                                       : rm::load_market(market_in, f);
      if (!market_in.empty()) {
        market.market().set_eta(e);
        market.market().set_kernel(k);
      }
      const rm::Dataset& eval = test ? *test : data;
      auto curve = rm::train_epochs(market, data, eval, train_epochs);
      rm::save_market(market, market_out);
      std::cout << "initial test MSE " << rm::format_double(curve.initial_test_mse) << ", best "
                << rm::format_double(curve.best_test_mse) << " at epoch " << curve.best_epoch << ", final "
                << rm::format_double(curve.final_test_mse) << '\n';
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
