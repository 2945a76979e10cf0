#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "regmarket/dataset.hpp"
#include "regmarket/random.hpp"

namespace regmarket {

inline constexpr std::uint32_t kUnboundedDepth = std::numeric_limits<std::uint32_t>::max();

/// Oblique split feature: c0 * x[i0] + c1 * x[i1].
struct RandomFeature {
  std::array<std::uint32_t, 2> inputs{0, 0};
  std::array<double, 2> coefficients{0.0, 0.0};

  double operator()(std::span<const double> x) const {
    return coefficients[0] * x[inputs[0]] + coefficients[1] * x[inputs[1]];
  }
  friend bool operator==(const RandomFeature&, const RandomFeature&) = default;
};

/// Bounds-checked evaluation of a feature.
double evaluate_feature(const RandomFeature& f, std::span<const double> x);

/// `pool_size` features over inputs drawn uniformly from [0, num_inputs),
/// coefficients uniform on [-1, 1].
std::vector<RandomFeature> generate_feature_pool(std::size_t num_inputs, std::size_t pool_size, Rng& rng);

/// Gaussian summary of the training responses reaching a node. A leaf of a
/// tree is a market participant with density N(mean, variance).
struct GaussianLeaf {
  double mean = 0.0;
  double variance = 0.0;
  std::uint32_t count = 0;
  std::uint32_t depth = 0;

  friend bool operator==(const GaussianLeaf&, const GaussianLeaf&) = default;
};

struct TreeNode {
  RandomFeature feature;
  double threshold = 0.0;  // x goes left when feature(x) <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  GaussianLeaf stats;

  bool is_leaf() const { return left < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary tree stored as a flat node array; node 0 is the root. Internal
/// nodes keep their own statistics so the tree can be evaluated at any depth.
class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  std::uint32_t height() const;

  /// Index of the node reached from the root, stopping at a true leaf or at
  /// depth `depth_cap`, whichever comes first.
  std::size_t node_index(std::span<const double> x, std::uint32_t depth_cap = kUnboundedDepth) const {
    std::size_t id = 0;
    for (std::uint32_t depth = 0; depth < depth_cap; ++depth) {
      const TreeNode& n = nodes_[id];
      if (n.is_leaf()) break;
      id = static_cast<std::size_t>(n.feature(x) <= n.threshold ? n.left : n.right);
    }
    return id;
  }

  const GaussianLeaf& leaf_for(std::span<const double> x, std::uint32_t depth_cap = kUnboundedDepth) const {
    return nodes_[node_index(x, depth_cap)].stats;
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct ForestParams {
  std::size_t trees = 100;
  std::size_t candidates = 25;   // random features tried per node
  std::size_t pool_size = 1000;  // features generated once per forest
  std::size_t min_split = 5;     // nodes with fewer samples stay leaves
  std::uint32_t max_depth = kUnboundedDepth;
  std::uint64_t seed = 0;
  bool bootstrap = false;  // grow each tree on a bootstrap resample
  double variance_floor_scale = 1e-6;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Absolute lower bound on any leaf variance; keeps constant-response data
/// from producing a zero-width density.
inline constexpr double kMinVariance = 1e-300;

/// Leaf variance floor for a training set: scale * (response range)^2.
double variance_floor(const ResponseRange& range, double scale);

struct SplitChoice {
  RandomFeature feature;
  double threshold = 0.0;
  double weighted_variance = 0.0;  // (n_L Var_L + n_R Var_R) / n
  std::size_t candidate = 0;       // position in the candidate list
};

/// Best variance-reducing split of `rows` of `data` over the candidate
/// features, with thresholds at midpoints between consecutive distinct
/// projected values. Ties keep the first minimum in (candidate, threshold)
/// order. Returns nothing for samples smaller than `min_split` or when no
/// threshold lowers the weighted variance.
std::optional<SplitChoice> best_split(const Dataset& data, std::span<const std::size_t> rows,
                                      std::span<const RandomFeature> candidates, std::size_t min_split = 5);

/// Mean and biased variance (no floor) of the responses at `rows`.
GaussianLeaf summarize(const Dataset& data, std::span<const std::size_t> rows);

/// Grows one tree on `rows` of `data`, drawing `params.candidates` features per
/// node from `pool` uniformly with replacement.
Tree grow_tree(const Dataset& data, std::span<const std::size_t> rows, const ForestParams& params,
               std::span<const RandomFeature> pool, double floor, Rng& rng);

/// Grows one tree on every row of `data`.
Tree grow_tree(const Dataset& data, const ForestParams& params, std::span<const RandomFeature> pool, Rng& rng);

class Forest {
 public:
  Forest() = default;
  Forest(ForestParams params, std::size_t num_inputs, double variance_floor, std::vector<Tree> trees);

  const ForestParams& params() const { return params_; }
  std::size_t num_inputs() const { return num_inputs_; }
  double variance_floor() const { return variance_floor_; }
  const std::vector<Tree>& trees() const { return trees_; }
  std::size_t size() const { return trees_.size(); }
  const Tree& tree(std::size_t i) const { return trees_[i]; }

  friend bool operator==(const Forest&, const Forest&) = default;

 private:
  ForestParams params_;
  std::size_t num_inputs_ = 0;
  double variance_floor_ = 0.0;
  std::vector<Tree> trees_;
};

/// Grows `params.trees` trees. The feature pool is drawn from the stream
/// (seed, "pool") and tree t from the stream (seed, t), so trees are
/// independent of the order in which they are grown.
Forest grow_forest(const Dataset& train, const ForestParams& params);

/// Plain average of the depth-capped leaf means over all trees.
double forest_predict(const Forest& forest, std::span<const double> x, std::uint32_t depth_cap = kUnboundedDepth);

std::vector<double> forest_predict(const Forest& forest, const Dataset& data,
                                   std::uint32_t depth_cap = kUnboundedDepth);

/// Versioned text format; every double is written in shortest round-trip form.
void write_forest(std::ostream& out, const Forest& forest);
Forest read_forest(std::istream& in);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

/// FNV-1a digest of the serialized forest; ties a saved market to its forest.
std::uint64_t forest_fingerprint(const Forest& forest);

}  // namespace regmarket
