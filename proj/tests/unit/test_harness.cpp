#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "regmarket/harness.hpp"

using namespace regmarket;

namespace {

ExperimentConfig tiny(Experiment e = Experiment::kTable1) {
  auto c = default_config(e);
  c.source.data = "friedman1";
  c.source.synthetic_train = 60;
  c.source.synthetic_test = 80;
  c.runs = 3;
  c.forest.trees = 6;
  c.forest.pool_size = 50;
  c.epochs = 4;
  c.alpha_grid = {0.2, 0.6};
  c.timing_repetitions = 1;
  c.seed = 11;
  return c;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("table1 report shape and self-consistency") {
  auto report = run_table1(tiny());
  REQUIRE(report.rows.size() == 1);
  const auto& row = report.rows[0];
  CHECK(row.dataset == "friedman1");
  CHECK(row.n_train == 60);
  CHECK(row.n_test == 80);
  CHECK(row.features == 10);
  CHECK(row.eta == doctest::Approx(10.0 / 60.0));
  REQUIRE(row.sigma.has_value());
  CHECK(row.sigma->sigma > 0.0);
  for (const char* label : {"RF", "DM", "GM"}) {
    const auto* m = row.method(label);
    REQUIRE(m != nullptr);
    CHECK(m->run_mse.size() == 3);
    CHECK(m->mean == doctest::Approx(mean(m->run_mse)).epsilon(1e-15));
    CHECK(m->sd == doctest::Approx(sample_sd(m->run_mse)).epsilon(1e-15));
  }
  CHECK(row.method("RF")->vs_rf == std::nullopt);
  CHECK(row.method("DM")->vs_rf.has_value());
  CHECK(row.method("DM")->mean_test_curve.size() == 4);
  CHECK(row.method("RF_deep") == nullptr);
  CHECK_FALSE(row.timing.has_value());
}

TEST_CASE("single run carries no annotations") {
  auto c = tiny();
  c.runs = 1;
  c.published_mse = 100.0;
  auto report = run_table1(c);
  for (const auto& m : report.rows[0].methods) {
    CHECK_FALSE(m.vs_rf.has_value());
    CHECK_FALSE(m.vs_published.has_value());
    CHECK(annotation(m).empty());
  }
}

TEST_CASE("reports are byte-deterministic and independent of jobs") {
  auto c = tiny();
  auto a = render_report(run_table1(c), ReportFormat::kCsv, false);
  c.jobs = 3;
  auto b = render_report(run_table1(c), ReportFormat::kCsv, false);
  CHECK(a == b);
  c.seed = 12;
  CHECK(render_report(run_table1(c), ReportFormat::kCsv, false) != a);

  auto report = run_table1(tiny());
  auto p1 = regmarket::testing::temp_path("r1.md");
  auto p2 = regmarket::testing::temp_path("r2.md");
  emit_report(report, ReportFormat::kMarkdown, p1, false);
  emit_report(report, ReportFormat::kMarkdown, p2, false);
  CHECK(read_all(p1) == read_all(p2));
  CHECK_THROWS(emit_report(report, ReportFormat::kCsv, "/nonexistent/dir/out.csv"));
}

TEST_CASE("csv header and row layout") {
  auto text = render_report(run_table1(tiny()), ReportFormat::kCsv, false);
  std::istringstream in(text);
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("dataset,N_train,N_test,F,Y,RF,DM,GM,annotations,speedup", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("friedman1,60,80,10,", 0) == 0);

  ExperimentReport empty;
  auto bare = render_report(empty, ReportFormat::kCsv);
  CHECK(bare == header + "\n");
}

TEST_CASE("table2 with an inactive cap reproduces table1") {
  auto c1 = tiny();
  c1.forest.max_depth = 10;
  c1.depth_cap = 10;
  auto t1 = run_table1(c1);
  auto c2 = tiny(Experiment::kTable2);
  c2.depth_cap = 10;
  auto t2 = run_table2(c2);
  for (const char* label : {"RF", "DM", "GM"})
    CHECK(t1.rows[0].method(label)->run_mse == t2.rows[0].method(label)->run_mse);
  CHECK(t2.rows[0].method("RF_deep")->run_mse == t1.rows[0].method("RF")->run_mse);
  REQUIRE(t2.rows[0].timing.has_value());
  CHECK(t2.rows[0].timing->rows_timed == 80);
  CHECK(t2.rows[0].timing->deep_seconds > 0.0);

  auto unbounded = tiny(Experiment::kTable2);
  unbounded.forest.max_depth = kUnboundedDepth;
  CHECK_THROWS_AS(run_table2(unbounded), std::invalid_argument);
}

TEST_CASE("csv source with random splits") {
  auto c = tiny();
  c.source.data = std::string(REGMARKET_DATA_DIR) + "/housing.csv";
  c.source.target = "MEDV";
  c.runs = 2;
  c.kernel = KernelChoice::kDelta;
  auto report = run_table1(c);
  const auto& row = report.rows[0];
  CHECK(row.dataset == "housing");
  CHECK(row.n_test == 50);
  CHECK(row.n_train == 456);
  CHECK(row.method("GM") == nullptr);
  CHECK_FALSE(row.sigma.has_value());

  c.source.target = "";
  CHECK_THROWS_AS(run_table1(c), std::invalid_argument);
  c.source.target = "NOPE";
  CHECK_THROWS(run_table1(c));
}

TEST_CASE("fixed sigma skips cross validation") {
  auto c = tiny();
  c.sigma = 0.9;
  c.kernel = KernelChoice::kGaussian;
  auto row = run_table1(c).rows[0];
  REQUIRE(row.sigma.has_value());
  CHECK(row.sigma->sigma == 0.9);
  CHECK(row.sigma->cv_mse.empty());
  CHECK(row.method("DM") == nullptr);
}

TEST_CASE("config validation") {
  auto c = tiny();
  c.runs = 0;
  CHECK_THROWS_AS(run_table1(c), std::invalid_argument);
  c = tiny();
  c.epochs = 0;
  CHECK_THROWS_AS(run_table1(c), std::invalid_argument);
}

TEST_CASE("curves output") {
  auto text = render_curves(run_table1(tiny()));
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  CHECK(header == "dataset,method,epoch,train_mse,test_mse");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 2 * 4);
}

TEST_CASE("parallel_for") {
  std::vector<int> hits(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);

  try {
    parallel_for(10, 2, [](std::size_t i) {
      if (i == 6) throw std::runtime_error("boom");
    });
    FAIL("expected failure");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "run 7 failed: boom");
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no tasks expected"); });
}

TEST_CASE("annotation symbols") {
  MethodResult m;
  CHECK(annotation(m).empty());
  m.vs_rf = TestResult{-3.0, 0.001, 99, Verdict::kFirstBetter};
  m.vs_published = TestResult{4.0, 0.001, 99, Verdict::kSecondBetter};
  CHECK(annotation(m) == "*-");
  m.vs_rf->verdict = Verdict::kSecondBetter;
  m.vs_published->verdict = Verdict::kFirstBetter;
  CHECK(annotation(m) == "!+");
}
