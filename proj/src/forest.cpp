#include "regmarket/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace regmarket {

double evaluate_feature(const RandomFeature& f, std::span<const double> x) {
  if (f.inputs[0] >= x.size() || f.inputs[1] >= x.size())
    throw std::out_of_range("feature input index out of range for a vector of size " + std::to_string(x.size()));
  return f(x);
}

std::vector<RandomFeature> generate_feature_pool(std::size_t num_inputs, std::size_t pool_size, Rng& rng) {
  if (num_inputs == 0) throw std::invalid_argument("feature pool needs at least one input");
  if (pool_size == 0) throw std::invalid_argument("feature pool size must be positive");
  std::uniform_int_distribution<std::uint32_t> input(0, static_cast<std::uint32_t>(num_inputs - 1));
  std::uniform_real_distribution<double> coefficient(-1.0, 1.0);
  std::vector<RandomFeature> pool(pool_size);
  for (auto& f : pool) {
    f.inputs = {input(rng), input(rng)};
    f.coefficients = {coefficient(rng), coefficient(rng)};
  }
  return pool;
}

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw std::invalid_argument("tree needs a root node");
  for (const auto& n : nodes_) {
    if (n.is_leaf() != (n.right < 0)) throw std::invalid_argument("internal node must have two children");
    auto bad = [&](std::int32_t c) { return c >= 0 && static_cast<std::size_t>(c) >= nodes_.size(); };
    if (bad(n.left) || bad(n.right)) throw std::invalid_argument("child index out of range");
  }
}

std::uint32_t Tree::height() const {
  std::uint32_t h = 0;
  for (const auto& n : nodes_) h = std::max(h, n.stats.depth);
  return h;
}

double variance_floor(const ResponseRange& range, double scale) {
  return std::max(scale * range.width() * range.width(), kMinVariance);
}

GaussianLeaf summarize(const Dataset& data, std::span<const std::size_t> rows) {
  GaussianLeaf s;
  s.count = static_cast<std::uint32_t>(rows.size());
  if (rows.empty()) return s;
  double sum = 0.0;
  for (std::size_t r : rows) sum += data.response(r);
  s.mean = sum / static_cast<double>(rows.size());
  double sse = 0.0;
  for (std::size_t r : rows) {
    double d = data.response(r) - s.mean;
    sse += d * d;
  }
  s.variance = sse / static_cast<double>(rows.size());
  return s;
}

namespace {

struct Projected {
  double z;
  double d;  // response minus node mean
};

// Scratch buffers reused across nodes of one tree.
struct SplitWorkspace {
  std::vector<Projected> points;
  std::vector<const RandomFeature*> candidates;
};

std::optional<SplitChoice> best_split_impl(const Dataset& data, std::span<const std::size_t> rows,
                                           std::span<const RandomFeature* const> candidates,
                                           std::size_t min_split, SplitWorkspace& ws) {
  const std::size_t n = rows.size();
  if (n < std::max<std::size_t>(min_split, 2) || candidates.empty()) return std::nullopt;

  double lo = data.response(rows[0]);
  double hi = lo;
  double sum = 0.0;
  for (std::size_t r : rows) {
    double y = data.response(r);
    lo = std::min(lo, y);
    hi = std::max(hi, y);
    sum += y;
  }
  if (lo == hi) return std::nullopt;
  const double mean = sum / static_cast<double>(n);

  double parent_sse = 0.0;
  double total_d = 0.0;
  for (std::size_t r : rows) {
    double d = data.response(r) - mean;
    parent_sse += d * d;
    total_d += d;
  }

  std::optional<SplitChoice> best;
  double best_sse = parent_sse;
  ws.points.resize(n);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const RandomFeature& f = *candidates[c];
    for (std::size_t i = 0; i < n; ++i) ws.points[i] = {f(data.row(rows[i])), data.response(rows[i]) - mean};
    std::sort(ws.points.begin(), ws.points.end(), [](const Projected& a, const Projected& b) { return a.z < b.z; });

    double left_sum = 0.0;
    double left_sq = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
      const Projected& p = ws.points[k - 1];
      left_sum += p.d;
      left_sq += p.d * p.d;
      if (!(p.z < ws.points[k].z)) continue;
      const double nl = static_cast<double>(k);
      const double nr = static_cast<double>(n - k);
      const double right_sum = total_d - left_sum;
      const double right_sq = parent_sse - left_sq;
      const double sse = std::max(left_sq - left_sum * left_sum / nl, 0.0) +
                         std::max(right_sq - right_sum * right_sum / nr, 0.0);
      if (sse < best_sse) {
        best_sse = sse;
        const double a = p.z;
        const double b = ws.points[k].z;
        double t = a + 0.5 * (b - a);
        if (!(t < b)) t = a;
        best = SplitChoice{f, t, sse / static_cast<double>(n), c};
      }
    }
  }
  // Rounding in the prefix sums can fake a sliver of improvement.
  if (best && !(best_sse < parent_sse * (1.0 - 1e-12))) return std::nullopt;
  return best;
}

class TreeGrower {
 public:
  TreeGrower(const Dataset& data, const ForestParams& params, std::span<const RandomFeature> pool, double floor,
             Rng& rng)
      : data_(data), params_(params), pool_(pool), floor_(floor), rng_(rng), pick_(0, pool.size() - 1) {}

  Tree grow(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    nodes_.clear();
    build(0, rows_.size(), 0);
    return Tree(std::move(nodes_));
  }

 private:
  std::int32_t build(std::size_t begin, std::size_t end, std::uint32_t depth) {
    std::span<std::size_t> rows(rows_.data() + begin, end - begin);
    auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    GaussianLeaf stats = summarize(data_, rows);
    stats.variance = std::max(stats.variance, floor_);
    stats.depth = depth;
    nodes_[id].stats = stats;

    if (depth >= params_.max_depth || rows.size() < params_.min_split) return id;
    ws_.candidates.clear();
    for (std::size_t k = 0; k < params_.candidates; ++k) ws_.candidates.push_back(&pool_[pick_(rng_)]);
    auto split = best_split_impl(data_, rows, ws_.candidates, params_.min_split, ws_);
    if (!split) return id;

    auto middle = std::partition(rows.begin(), rows.end(), [&](std::size_t r) {
      return split->feature(data_.row(r)) <= split->threshold;
    });
    auto mid = begin + static_cast<std::size_t>(middle - rows.begin());
    if (mid == begin || mid == end) return id;  // cannot happen with midpoint thresholds

    nodes_[id].feature = split->feature;
    nodes_[id].threshold = split->threshold;
    std::int32_t left = build(begin, mid, depth + 1);
    std::int32_t right = build(mid, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  const Dataset& data_;
  const ForestParams& params_;
  std::span<const RandomFeature> pool_;
  double floor_;
  Rng& rng_;
  std::uniform_int_distribution<std::size_t> pick_;
  std::vector<std::size_t> rows_;
  std::vector<TreeNode> nodes_;
  SplitWorkspace ws_;
};

}  // namespace

std::optional<SplitChoice> best_split(const Dataset& data, std::span<const std::size_t> rows,
                                      std::span<const RandomFeature> candidates, std::size_t min_split) {
  if (rows.empty()) throw std::invalid_argument("best_split needs a nonempty sample");
  SplitWorkspace ws;
  std::vector<const RandomFeature*> ptrs;
  for (const auto& f : candidates) ptrs.push_back(&f);
  return best_split_impl(data, rows, ptrs, min_split, ws);
}

Tree grow_tree(const Dataset& data, std::span<const std::size_t> rows, const ForestParams& params,
               std::span<const RandomFeature> pool, double floor, Rng& rng) {
  if (rows.empty()) throw std::invalid_argument("cannot grow a tree on an empty sample");
  if (pool.empty()) throw std::invalid_argument("feature pool is empty");
  TreeGrower grower(data, params, pool, floor, rng);
  return grower.grow(std::vector<std::size_t>(rows.begin(), rows.end()));
}

Tree grow_tree(const Dataset& data, const ForestParams& params, std::span<const RandomFeature> pool, Rng& rng) {
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return grow_tree(data, rows, params, pool, variance_floor(data.response_range(), params.variance_floor_scale),
                   rng);
}

Forest::Forest(ForestParams params, std::size_t num_inputs, double variance_floor, std::vector<Tree> trees)
    : params_(params), num_inputs_(num_inputs), variance_floor_(variance_floor), trees_(std::move(trees)) {
  if (trees_.empty()) throw std::invalid_argument("forest needs at least one tree");
}

Forest grow_forest(const Dataset& train, const ForestParams& params) {
  if (params.trees == 0) throw std::invalid_argument("forest needs at least one tree");
  if (params.candidates == 0) throw std::invalid_argument("candidates per node must be positive");
  Rng pool_rng = make_rng(params.seed, stream_tag("pool"));
  auto pool = generate_feature_pool(train.cols(), params.pool_size, pool_rng);
  const double floor = variance_floor(train.response_range(), params.variance_floor_scale);

  std::vector<Tree> trees;
  trees.reserve(params.trees);
  std::vector<std::size_t> rows(train.rows());
  for (std::size_t t = 0; t < params.trees; ++t) {
    Rng rng = make_rng(params.seed, t);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, train.rows() - 1);
      for (auto& r : rows) r = draw(rng);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    trees.push_back(grow_tree(train, rows, params, pool, floor, rng));
  }
  return Forest(params, train.cols(), floor, std::move(trees));
}

double forest_predict(const Forest& forest, std::span<const double> x, std::uint32_t depth_cap) {
  if (forest.size() == 0) throw std::invalid_argument("empty forest");
  double sum = 0.0;
  for (const auto& tree : forest.trees()) sum += tree.leaf_for(x, depth_cap).mean;
  return sum / static_cast<double>(forest.size());
}

std::vector<double> forest_predict(const Forest& forest, const Dataset& data, std::uint32_t depth_cap) {
  if (data.cols() != forest.num_inputs()) throw std::invalid_argument("dataset width does not match the forest");
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) out[i] = forest_predict(forest, data.row(i), depth_cap);
  return out;
}

}  // namespace regmarket
