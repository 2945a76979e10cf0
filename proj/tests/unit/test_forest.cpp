#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "regmarket/forest.hpp"

using namespace regmarket;

namespace {

RandomFeature identity_feature() { return RandomFeature{{0, 0}, {1.0, 0.0}}; }

// Exhaustive scan: every candidate, every midpoint between distinct sorted
// projections, two-pass variances of the explicit partitions.
struct BruteResult {
  double weighted_variance = std::numeric_limits<double>::infinity();
  bool found = false;
};

double two_pass_sse(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double y : v) s += (y - m) * (y - m);
  return s;
}

double partition_score(const Dataset& d, const std::vector<std::size_t>& rows, const RandomFeature& f, double t) {
  std::vector<double> left, right;
  for (auto r : rows) (f(d.row(r)) <= t ? left : right).push_back(d.response(r));
  return (two_pass_sse(left) + two_pass_sse(right)) / static_cast<double>(rows.size());
}

BruteResult brute_split(const Dataset& d, const std::vector<std::size_t>& rows,
                        const std::vector<RandomFeature>& candidates) {
  BruteResult best;
  for (const auto& f : candidates) {
    std::vector<double> z;
    for (auto r : rows) z.push_back(f(d.row(r)));
    std::sort(z.begin(), z.end());
    z.erase(std::unique(z.begin(), z.end()), z.end());
    for (std::size_t k = 0; k + 1 < z.size(); ++k) {
      const double score = partition_score(d, rows, f, 0.5 * (z[k] + z[k + 1]));
      if (score < best.weighted_variance) {
        best.weighted_variance = score;
        best.found = true;
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("evaluate_feature examples") {
  std::vector<double> x{3.0, 9.0};
  CHECK(evaluate_feature({{0, 1}, {1.0, 0.0}}, x) == 3.0);
  std::vector<double> y{4.0, 100.0};
  CHECK(evaluate_feature({{0, 0}, {0.5, -0.5}}, y) == 0.0);
  std::vector<double> z{4.0, 8.0};
  CHECK(evaluate_feature({{0, 1}, {0.25, 0.75}}, z) == 7.0);
  CHECK_THROWS_AS(evaluate_feature({{0, 2}, {1.0, 1.0}}, z), std::out_of_range);
}

TEST_CASE("generate_feature_pool") {
  Rng rng(11);
  auto pool = generate_feature_pool(7, 1000, rng);
  REQUIRE(pool.size() == 1000);
  bool coincide = false;
  for (const auto& f : pool) {
    CHECK(f.inputs[0] < 7);
    CHECK(f.inputs[1] < 7);
    CHECK(std::abs(f.coefficients[0]) <= 1.0);
    CHECK(std::abs(f.coefficients[1]) <= 1.0);
    coincide |= f.inputs[0] == f.inputs[1];
  }
  CHECK(coincide);  // ~1/7 of pairs share an input

  Rng one(1);
  CHECK(generate_feature_pool(3, 1, one).size() == 1);

  Rng a(5), b(5);
  CHECK(generate_feature_pool(4, 50, a) == generate_feature_pool(4, 50, b));
  CHECK_THROWS_AS(generate_feature_pool(0, 5, a), std::invalid_argument);
  CHECK_THROWS_AS(generate_feature_pool(3, 0, a), std::invalid_argument);
}

TEST_CASE("best_split on two clusters") {
  auto d = regmarket::testing::line_data({0, 1, 10, 11, 12}, {0, 0, 5, 5, 5});
  std::vector<std::size_t> rows{0, 1, 2, 3, 4};
  std::vector<RandomFeature> cand{identity_feature()};
  auto s = best_split(d, rows, cand, 5);
  REQUIRE(s.has_value());
  CHECK(s->threshold > 1.0);
  CHECK(s->threshold < 10.0);
  CHECK(s->weighted_variance == doctest::Approx(0.0));

  auto four = regmarket::testing::line_data({0, 1, 10, 11}, {0, 0, 5, 5});
  std::vector<std::size_t> four_rows{0, 1, 2, 3};
  CHECK_FALSE(best_split(four, four_rows, cand, 5).has_value());  // fewer than 5 samples
  auto s4 = best_split(four, four_rows, cand, 2);
  REQUIRE(s4.has_value());
  CHECK(s4->threshold == doctest::Approx(5.5));
}

TEST_CASE("best_split with constant response") {
  auto d = regmarket::testing::line_data({0, 1, 2, 3, 4, 5}, {0.1, 0.1, 0.1, 0.1, 0.1, 0.1});
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  std::vector<RandomFeature> cand{identity_feature()};
  CHECK_FALSE(best_split(d, rows, cand, 5).has_value());
}

TEST_CASE("best_split ties keep the first candidate") {
  auto d = regmarket::testing::line_data({0, 1, 2, 3, 4, 5}, {0, 0, 0, 1, 1, 1});
  std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
  std::vector<RandomFeature> cand{identity_feature(), {{0, 0}, {0.5, 0.0}}};
  auto s = best_split(d, rows, cand, 5);
  REQUIRE(s.has_value());
  CHECK(s->candidate == 0);
  CHECK(s->threshold == doctest::Approx(2.5));
}

TEST_CASE("best_split matches exhaustive scan on random samples") {
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = size(rng);
    auto d = regmarket::testing::random_data(n, 3, rng());
    // Coarsen one input on some trials so projections tie.
    std::vector<double> f(d.features().begin(), d.features().end());
    if (trial % 3 == 0)
      for (std::size_t i = 0; i < n; ++i) f[i * 3 + 1] = coarse(rng);
    Dataset data("t", d.feature_names(), "y", f, std::vector<double>(d.responses().begin(), d.responses().end()));
    auto cand = generate_feature_pool(3, 25, rng);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});

    auto got = best_split(data, rows, cand, 5);
    if (n < 5) {
      CHECK_FALSE(got.has_value());
      continue;
    }
    auto brute = brute_split(data, rows, cand);
    const double parent = two_pass_sse(std::vector<double>(data.responses().begin(), data.responses().end())) /
                          static_cast<double>(n);
    if (!brute.found || brute.weighted_variance >= parent) {
      CHECK_FALSE(got.has_value());
      continue;
    }
    REQUIRE(got.has_value());
    CHECK(got->weighted_variance == doctest::Approx(brute.weighted_variance).epsilon(1e-9));
    CHECK(partition_score(data, rows, got->feature, got->threshold) ==
          doctest::Approx(brute.weighted_variance).epsilon(1e-9));
    CHECK(got->weighted_variance <= parent);
  }
}

TEST_CASE("grow_tree on constant responses is a single leaf") {
  auto d = regmarket::testing::line_data({0, 1, 2, 3, 4, 5, 6}, {2, 2, 2, 2, 2, 2, 2});
  ForestParams p;
  std::vector<RandomFeature> pool{identity_feature()};
  Rng rng(1);
  auto tree = grow_tree(d, p, pool, rng);
  REQUIRE(tree.size() == 1);
  CHECK(tree.node(0).stats.mean == 2.0);
  CHECK(tree.node(0).stats.variance == kMinVariance);  // zero range: absolute floor
  CHECK(tree.node(0).stats.count == 7);
}

TEST_CASE("grow_tree splits two clusters into pure leaves") {
  auto d = regmarket::testing::line_data({0, 1, 10, 11}, {0, 0, 5, 5});
  ForestParams p;
  p.min_split = 2;
  std::vector<RandomFeature> pool{identity_feature()};
  Rng rng(1);
  auto tree = grow_tree(d, p, pool, rng);
  REQUIRE(tree.size() == 3);
  const auto& root = tree.node(0);
  CHECK_FALSE(root.is_leaf());
  CHECK(root.threshold == doctest::Approx(5.5));
  CHECK(root.stats.mean == 2.5);
  CHECK(root.stats.variance == 6.25);
  const double floor = 1e-6 * 25.0;
  for (auto child : {root.left, root.right}) {
    const auto& leaf = tree.node(static_cast<std::size_t>(child));
    CHECK(leaf.is_leaf());
    CHECK(leaf.stats.count == 2);
    CHECK(leaf.stats.variance == doctest::Approx(floor));
    CHECK(leaf.stats.depth == 1);
  }
  CHECK(tree.node(static_cast<std::size_t>(root.left)).stats.mean == 0.0);
  CHECK(tree.node(static_cast<std::size_t>(root.right)).stats.mean == 5.0);
}

namespace {

void check_structure(const Tree& tree, const ForestParams& p) {
  for (const auto& n : tree.nodes()) {
    CHECK(n.stats.count >= 1);
    if (n.stats.depth > p.max_depth) FAIL("node deeper than max_depth");
    if (n.is_leaf()) continue;
    const auto& l = tree.node(static_cast<std::size_t>(n.left));
    const auto& r = tree.node(static_cast<std::size_t>(n.right));
    CHECK(n.stats.count == l.stats.count + r.stats.count);
    CHECK(n.stats.count >= p.min_split);
    CHECK(l.stats.depth == n.stats.depth + 1);
    // children never have more weighted spread than the parent
    const double child = (l.stats.count * l.stats.variance + r.stats.count * r.stats.variance) / n.stats.count;
    CHECK(child <= n.stats.variance * (1.0 + 1e-9) + 1e-12);
  }
}

}  // namespace

TEST_CASE("forest structure invariants") {
  auto d = regmarket::testing::random_data(300, 5, 3);
  for (std::uint32_t depth : {kUnboundedDepth, 10u, 3u}) {
    ForestParams p;
    p.trees = 8;
    p.max_depth = depth;
    p.seed = 17;
    auto forest = grow_forest(d, p);
    CHECK(forest.size() == 8);
    for (const auto& t : forest.trees()) {
      check_structure(t, p);
      if (depth != kUnboundedDepth) CHECK(t.height() <= depth);
    }
  }
}

TEST_CASE("leaf_for depth caps") {
  auto d = regmarket::testing::random_data(400, 4, 8);
  ForestParams p;
  p.trees = 3;
  p.max_depth = 10;
  p.seed = 5;
  auto forest = grow_forest(d, p);
  const Tree& tree = forest.tree(0);
  REQUIRE(tree.height() > 5);
  for (std::size_t i = 0; i < 100; ++i) {
    auto x = d.row(i);
    CHECK(tree.leaf_for(x, 0) == tree.node(0).stats);
    CHECK(tree.leaf_for(x, kUnboundedDepth) == tree.leaf_for(x, 10));
    CHECK(tree.leaf_for(x, 50) == tree.leaf_for(x, 10));
    // explicit path walk
    std::vector<std::size_t> path{0};
    while (!tree.node(path.back()).is_leaf()) {
      const auto& n = tree.node(path.back());
      path.push_back(static_cast<std::size_t>(n.feature(x) <= n.threshold ? n.left : n.right));
    }
    const std::size_t expected = path[std::min<std::size_t>(5, path.size() - 1)];
    CHECK(tree.node_index(x, 5) == expected);
    CHECK(tree.leaf_for(x, 5).depth <= 5);
  }
}

TEST_CASE("forest_predict averages leaf means") {
  std::vector<TreeNode> a(1), b(1);
  a[0].stats = {4.0, 1.0, 4, 0};
  b[0].stats = {6.0, 1.0, 4, 0};
  Forest one(ForestParams{}, 1, 1e-6, {Tree(a)});
  Forest two(ForestParams{}, 1, 1e-6, {Tree(a), Tree(b)});
  std::vector<double> x{3.0};
  CHECK(forest_predict(one, x) == 4.0);
  CHECK(forest_predict(two, x) == 5.0);
}

TEST_CASE("forests are seed-deterministic and serialize losslessly") {
  auto d = regmarket::testing::random_data(120, 3, 4);
  ForestParams p;
  p.trees = 5;
  p.seed = 99;
  auto f1 = grow_forest(d, p);
  auto f2 = grow_forest(d, p);
  CHECK(f1 == f2);
  p.seed = 100;
  CHECK_FALSE(grow_forest(d, p) == f1);

  std::stringstream buf;
  write_forest(buf, f1);
  auto back = read_forest(buf);
  CHECK(back == f1);
  CHECK(forest_fingerprint(back) == forest_fingerprint(f1));

  auto path = regmarket::testing::temp_path("forest.txt");
  save_forest(f1, path);
  CHECK(load_forest(path) == f1);

  std::stringstream bad("regmarket-forest 2\n");
  CHECK_THROWS(read_forest(bad));
}

TEST_CASE("bootstrap changes the trees") {
  auto d = regmarket::testing::random_data(80, 3, 4);
  ForestParams p;
  p.trees = 2;
  p.seed = 3;
  auto plain = grow_forest(d, p);
  p.bootstrap = true;
  auto boot = grow_forest(d, p);
  CHECK_FALSE(plain == boot);
  CHECK(plain.tree(0).node(0).stats.count == 80);
  CHECK(boot.tree(0).node(0).stats.count == 80);
}
