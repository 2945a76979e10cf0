#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <optional>

#include "regmarket/harness.hpp"

namespace py = pybind11;
namespace rm = regmarket;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(std::span<const double> v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

rm::Dataset make_dataset(const Array& features, const Array& response, std::optional<std::vector<std::string>> names,
                         const std::string& target, const std::string& name) {
  if (features.ndim() != 2) throw std::invalid_argument("features must be a 2-D array");
  if (response.ndim() != 1) throw std::invalid_argument("response must be a 1-D array");
  const auto rows = static_cast<std::size_t>(features.shape(0));
  const auto cols = static_cast<std::size_t>(features.shape(1));
  std::vector<std::string> labels;
  if (names) {
    labels = *names;
  } else {
    for (std::size_t c = 0; c < cols; ++c) labels.push_back("x" + std::to_string(c));
  }
  std::vector<double> f(features.data(), features.data() + rows * cols);
  std::vector<double> y(response.data(), response.data() + response.size());
  return rm::Dataset(name, labels, target, std::move(f), std::move(y));
}

py::array_t<double> features_of(const rm::Dataset& d) {
  py::array_t<double> out({static_cast<py::ssize_t>(d.rows()), static_cast<py::ssize_t>(d.cols())});
  std::copy(d.features().begin(), d.features().end(), out.mutable_data());
  return out;
}

std::uint32_t depth_arg(std::optional<std::uint32_t> cap) { return cap.value_or(rm::kUnboundedDepth); }

rm::RewardKernel kernel_arg(std::optional<double> sigma, int points) {
  if (!sigma) return rm::DeltaKernel{};
  return rm::gaussian_kernel(*sigma, points);
}

void check_matrix(const Array& x, std::size_t width) {
  if (x.ndim() != 2 || static_cast<std::size_t>(x.shape(1)) != width)
    throw std::invalid_argument("expected a 2-D array with " + std::to_string(width) + " columns");
}

py::dict test_result(const rm::TestResult& r) {
  py::dict d;
  d["t"] = r.t;
  d["p_value"] = r.p_value;
  d["df"] = r.df;
  d["verdict"] = std::string(rm::to_string(r.verdict));
  return d;
}

py::dict curve_dict(const rm::TrainingCurve& c) {
  py::dict d;
  d["initial_train_mse"] = c.initial_train_mse;
  d["initial_test_mse"] = c.initial_test_mse;
  d["train_mse"] = c.train_mse;
  d["test_mse"] = c.test_mse;
  d["best_epoch"] = c.best_epoch;
  d["best_test_mse"] = c.best_test_mse;
  d["final_test_mse"] = c.final_test_mse;
  d["skipped"] = c.skipped;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Regression markets over random-feature forests";

  py::class_<rm::ResponseRange>(m, "ResponseRange")
      .def_readonly("min", &rm::ResponseRange::min)
      .def_readonly("max", &rm::ResponseRange::max)
      .def_property_readonly("width", &rm::ResponseRange::width);

  py::class_<rm::Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("features"), py::arg("response"), py::arg("feature_names") = py::none(),
           py::arg("target") = "y", py::arg("name") = "data")
      .def_property_readonly("name", &rm::Dataset::name)
      .def_property_readonly("rows", &rm::Dataset::rows)
      .def_property_readonly("cols", &rm::Dataset::cols)
      .def_property_readonly("feature_names", &rm::Dataset::feature_names)
      .def_property_readonly("target_name", &rm::Dataset::target_name)
      .def_property_readonly("features", &features_of)
      .def_property_readonly("response", [](const rm::Dataset& d) { return to_numpy(d.responses()); })
      .def_property_readonly("response_range", &rm::Dataset::response_range)
      .def("__len__", &rm::Dataset::rows);

  m.def("load_csv", &rm::load_csv, py::arg("path"), py::arg("target"), py::arg("delimiter") = ',');
  m.def("save_csv", &rm::save_csv, py::arg("data"), py::arg("path"), py::arg("delimiter") = ',');
  m.def(
      "generate_friedman",
      [](const std::string& which, std::size_t n, std::uint64_t seed, bool noise) {
        rm::Rng rng(seed);
        return rm::generate_friedman(which, n, rng, noise);
      },
      py::arg("which"), py::arg("n"), py::arg("seed") = 0, py::arg("noise") = true);
  m.def(
      "random_split",
      [](const rm::Dataset& d, double fraction, std::uint64_t seed) {
        rm::Rng rng(seed);
        auto s = rm::random_split(d, fraction, rng);
        return py::make_tuple(std::move(s.train), std::move(s.test));
      },
      py::arg("data"), py::arg("test_fraction"), py::arg("seed") = 0);

  py::class_<rm::ForestParams>(m, "ForestParams")
      .def(py::init<>())
      .def_readwrite("trees", &rm::ForestParams::trees)
      .def_readwrite("candidates", &rm::ForestParams::candidates)
      .def_readwrite("pool_size", &rm::ForestParams::pool_size)
      .def_readwrite("min_split", &rm::ForestParams::min_split)
      .def_property(
          "max_depth",
          [](const rm::ForestParams& p) -> std::optional<std::uint32_t> {
            if (p.max_depth == rm::kUnboundedDepth) return std::nullopt;
            return p.max_depth;
          },
          [](rm::ForestParams& p, std::optional<std::uint32_t> d) { p.max_depth = depth_arg(d); })
      .def_readwrite("seed", &rm::ForestParams::seed)
      .def_readwrite("bootstrap", &rm::ForestParams::bootstrap)
      .def_readwrite("variance_floor_scale", &rm::ForestParams::variance_floor_scale);

  py::class_<rm::Forest, std::shared_ptr<rm::Forest>>(m, "Forest")
      .def_property_readonly("size", &rm::Forest::size)
      .def_property_readonly("num_inputs", &rm::Forest::num_inputs)
      .def_property_readonly("variance_floor", &rm::Forest::variance_floor)
      .def_property_readonly("params", &rm::Forest::params)
      .def(
          "predict",
          [](const rm::Forest& f, const Array& x, std::optional<std::uint32_t> cap) {
            check_matrix(x, f.num_inputs());
            const auto n = static_cast<std::size_t>(x.shape(0));
            py::array_t<double> out(static_cast<py::ssize_t>(n));
            auto* o = out.mutable_data();
            for (std::size_t i = 0; i < n; ++i)
              o[i] = rm::forest_predict(f, std::span<const double>(x.data() + i * f.num_inputs(), f.num_inputs()),
                                        depth_arg(cap));
            return out;
          },
          py::arg("x"), py::arg("depth_cap") = py::none())
      .def("fingerprint", &rm::forest_fingerprint)
      .def("save", [](const rm::Forest& f, const std::filesystem::path& p) { rm::save_forest(f, p); })
      .def("__len__", &rm::Forest::size);

  m.def(
      "grow_forest", [](const rm::Dataset& d, const rm::ForestParams& p) { return std::make_shared<rm::Forest>(rm::grow_forest(d, p)); },
      py::arg("train"), py::arg("params") = rm::ForestParams{});
  m.def(
      "load_forest", [](const std::filesystem::path& p) { return std::make_shared<rm::Forest>(rm::load_forest(p)); },
      py::arg("path"));

  m.def(
      "hermite_gauss",
      [](int n) {
        auto r = rm::hermite_gauss(n);
        return py::make_tuple(to_numpy(r.nodes), to_numpy(r.weights));
      },
      py::arg("n"));

  py::class_<rm::Market>(m, "Market")
      .def(py::init([](const Array& means, const Array& variances, double eta, std::optional<double> sigma,
                       int quad_points) {
             if (means.size() != variances.size()) throw std::invalid_argument("means and variances differ in length");
             std::vector<rm::GaussianLeaf> leaves;
             for (py::ssize_t i = 0; i < means.size(); ++i) leaves.push_back({means.data()[i], variances.data()[i], 1, 0});
             return rm::Market(leaves, eta, kernel_arg(sigma, quad_points));
           }),
           py::arg("means"), py::arg("variances"), py::arg("eta"), py::arg("sigma") = py::none(),
           py::arg("quad_points") = 5)
      .def_property_readonly("size", &rm::Market::size)
      .def_property(
          "budgets", [](const rm::Market& mk) { return to_numpy(mk.budgets()); },
          [](rm::Market& mk, const Array& b) { mk.set_budgets(std::span<const double>(b.data(), b.size())); })
      .def_property("eta", &rm::Market::eta, &rm::Market::set_eta)
      .def_property_readonly("skipped", &rm::Market::skipped)
      .def("budget_sum", &rm::Market::budget_sum)
      .def("price_density", &rm::Market::price_density, py::arg("active"), py::arg("y"))
      .def("predict", &rm::Market::predict, py::arg("active"))
      .def(
          "update",
          [](rm::Market& mk, const std::vector<std::uint32_t>& active, double y) -> std::optional<std::vector<double>> {
            std::vector<double> deltas(active.size());
            if (!mk.update(active, y, deltas)) return std::nullopt;
            return deltas;
          },
          py::arg("active"), py::arg("y"));

  py::class_<rm::ForestMarket>(m, "ForestMarket")
      .def(py::init([](std::shared_ptr<rm::Forest> f, std::optional<std::uint32_t> cap, double eta,
                       std::optional<double> sigma, int quad_points) {
             return rm::ForestMarket(std::move(f), depth_arg(cap), eta, kernel_arg(sigma, quad_points));
           }),
           py::arg("forest"), py::arg("depth_cap") = py::none(), py::arg("eta") = 0.05, py::arg("sigma") = py::none(),
           py::arg("quad_points") = 5)
      .def_property_readonly("participants", &rm::ForestMarket::participants)
      .def_property_readonly("budgets", [](const rm::ForestMarket& fm) { return to_numpy(fm.market().budgets()); })
      .def("budget_sum", [](const rm::ForestMarket& fm) { return fm.market().budget_sum(); })
      .def(
          "predict",
          [](const rm::ForestMarket& fm, const Array& x) {
            const std::size_t w = fm.forest().num_inputs();
            check_matrix(x, w);
            const auto n = static_cast<std::size_t>(x.shape(0));
            py::array_t<double> out(static_cast<py::ssize_t>(n));
            for (std::size_t i = 0; i < n; ++i)
              out.mutable_data()[i] = fm.predict(std::span<const double>(x.data() + i * w, w));
            return out;
          },
          py::arg("x"))
      .def(
          "update",
          [](rm::ForestMarket& fm, const Array& x, double y) {
            return fm.update(std::span<const double>(x.data(), x.size()), y);
          },
          py::arg("x"), py::arg("y"))
      .def(
          "train",
          [](rm::ForestMarket& fm, const rm::Dataset& train, const rm::Dataset& test, std::size_t epochs) {
            return curve_dict(rm::train_epochs(fm, train, test, epochs));
          },
          py::arg("train"), py::arg("test"), py::arg("epochs") = 50)
      .def("save", [](const rm::ForestMarket& fm, const std::filesystem::path& p) { rm::save_market(fm, p); });

  m.def("default_eta", &rm::default_eta, py::arg("train_rows"));

  m.def(
      "mse", [](const Array& p, const Array& t) { return rm::mse({p.data(), static_cast<std::size_t>(p.size())}, {t.data(), static_cast<std::size_t>(t.size())}); },
      py::arg("predictions"), py::arg("truths"));
  m.def(
      "paired_t_test",
      [](const Array& a, const Array& b, double alpha) {
        return test_result(rm::paired_t_test({a.data(), static_cast<std::size_t>(a.size())},
                                             {b.data(), static_cast<std::size_t>(b.size())}, alpha));
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 0.01);
  m.def(
      "one_sample_t_test",
      [](const Array& a, double constant, double alpha) {
        return test_result(rm::one_sample_t_test({a.data(), static_cast<std::size_t>(a.size())}, constant, alpha));
      },
      py::arg("sample"), py::arg("constant"), py::arg("alpha") = 0.01);
  m.def(
      "means_t_test",
      [](double mean_a, double sd_a, std::size_t n_a, double mean_b, double sd_b, std::size_t n_b, double alpha) {
        return test_result(rm::means_t_test({mean_a, sd_a, n_a}, {mean_b, sd_b, n_b}, alpha));
      },
      py::arg("mean_a"), py::arg("sd_a"), py::arg("n_a"), py::arg("mean_b"), py::arg("sd_b"), py::arg("n_b"),
      py::arg("alpha") = 0.01);

  m.def(
      "run_experiment",
      [](const std::string& experiment, const std::string& data, const std::string& target,
         const std::string& test_data, std::size_t runs, double test_fraction, std::size_t trees,
         std::optional<std::uint32_t> max_depth, std::optional<std::uint32_t> depth_cap, std::size_t epochs,
         const std::string& kernel, std::optional<double> sigma, std::vector<double> alpha_grid, double eta,
         std::uint64_t seed, std::size_t jobs, std::size_t synthetic_train, std::size_t synthetic_test) {
        if (experiment != "table1" && experiment != "table2")
          throw std::invalid_argument("experiment must be 'table1' or 'table2'");
        if (kernel != "delta" && kernel != "gauss" && kernel != "both")
          throw std::invalid_argument("kernel must be 'delta', 'gauss' or 'both'");
        auto c = rm::default_config(experiment == "table2" ? rm::Experiment::kTable2 : rm::Experiment::kTable1);
        c.source.data = data;
        c.source.target = target;
        c.source.test_data = test_data;
        c.source.synthetic_train = synthetic_train;
        c.source.synthetic_test = synthetic_test;
        c.runs = runs;
        c.test_fraction = test_fraction;
        c.forest.trees = trees;
        if (max_depth) c.forest.max_depth = *max_depth;
        if (depth_cap) c.depth_cap = *depth_cap;
        c.epochs = epochs;
        c.kernel = kernel == "delta" ? rm::KernelChoice::kDelta
                   : kernel == "gauss" ? rm::KernelChoice::kGaussian
                                       : rm::KernelChoice::kBoth;
        c.sigma = sigma;
        if (!alpha_grid.empty()) c.alpha_grid = std::move(alpha_grid);
        c.eta = eta;
        c.seed = seed;
        c.jobs = jobs;
        rm::ExperimentReport report;
        {
          py::gil_scoped_release release;
          report = rm::run_experiment(c);
        }
        const auto& row = report.rows.front();
        py::dict out;
        out["dataset"] = row.dataset;
        out["n_train"] = row.n_train;
        out["n_test"] = row.n_test;
        out["eta"] = row.eta;
        if (row.sigma) out["sigma"] = row.sigma->sigma;
        if (row.timing) out["speedup"] = row.timing->speedup;
        py::dict methods;
        for (const auto& mr : row.methods) {
          py::dict md;
          md["mean"] = mr.mean;
          md["sd"] = mr.sd;
          md["run_mse"] = mr.run_mse;
          md["run_final_mse"] = mr.run_final_mse;
          md["annotation"] = rm::annotation(mr);
          if (mr.vs_rf) md["vs_rf"] = test_result(*mr.vs_rf);
          methods[py::str(mr.label)] = md;
        }
        out["methods"] = methods;
        out["csv"] = rm::render_report(report, rm::ReportFormat::kCsv, false);
        return out;
      },
      py::arg("experiment") = "table1", py::arg("data") = "friedman1", py::arg("target") = "",
      py::arg("test_data") = "", py::arg("runs") = 100, py::arg("test_fraction") = 0.1, py::arg("trees") = 100,
      py::arg("max_depth") = py::none(), py::arg("depth_cap") = py::none(), py::arg("epochs") = 50,
      py::arg("kernel") = "both", py::arg("sigma") = py::none(), py::arg("alpha_grid") = std::vector<double>{},
      py::arg("eta") = 0.0, py::arg("seed") = 1, py::arg("jobs") = 1, py::arg("synthetic_train") = 200,
      py::arg("synthetic_test") = 2000);
}
