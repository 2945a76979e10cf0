#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "regmarket/dataset.hpp"
#include "regmarket/forest.hpp"
#include "regmarket/quadrature.hpp"

namespace regmarket {

/// Dirac reward kernel: winnings are h_m(y)/c(y) at the ground truth.
struct DeltaKernel {};

/// Gaussian reward kernel of bandwidth `sigma`, integrated with `rule`.
struct GaussianKernel {
  double sigma = 1.0;
  QuadratureRule rule;
};

using RewardKernel = std::variant<DeltaKernel, GaussianKernel>;

GaussianKernel gaussian_kernel(double sigma, int points = 5);

/// log N(y; mean, variance).
double log_normal_pdf(double y, double mean, double variance);

/// Budget-weighted mixture of Gaussian participant densities.
///
/// Participants are identified by index. Every query works on an *active*
/// subset of indices (the participants that bet on the current instance);
/// prices and predictions use the active budgets renormalized to sum to 1,
/// while updates scale the raw budgets, so the total budget over all
/// participants is invariant under both reward kernels.
///
/// Updates mutate budgets and are single-writer. Const members are safe to
/// call concurrently on a market nobody is updating.
class Market {
 public:
  /// Uniform budgets summing to 1. Requires eta in [0, 1].
  Market(std::span<const GaussianLeaf> participants, double eta, RewardKernel kernel);

  std::size_t size() const { return budgets_.size(); }
  std::span<const double> budgets() const { return budgets_; }
  void set_budgets(std::span<const double> budgets);
  double budget_sum() const;

  double mean(std::size_t i) const { return means_[i]; }
  double variance(std::size_t i) const { return variances_[i]; }

  double eta() const { return eta_; }
  void set_eta(double eta);
  const RewardKernel& kernel() const { return kernel_; }
  void set_kernel(RewardKernel kernel);

  /// Instances skipped because the price underflowed at the ground truth.
  std::size_t skipped() const { return skipped_; }

  /// Sum of active budgets.
  double active_mass(std::span<const std::uint32_t> active) const;

  /// c(y) = sum_m w_m N(y; mean_m, var_m), w_m = beta_m / active mass.
  double price_density(std::span<const std::uint32_t> active, double y) const;

  /// Mean of the price density: sum_m w_m mean_m.
  double predict(std::span<const std::uint32_t> active) const;

  /// Winnings per unit bet under the Dirac kernel, h_m(y)/c(y), written to
  /// `ratios` (one per active entry). Returns false when the price at y is
  /// degenerate; `ratios` is then unspecified.
  bool delta_payoffs(std::span<const std::uint32_t> active, double y, std::span<double> ratios) const;

  /// Winnings per unit bet under a Gaussian kernel, the quadrature estimate of
  /// the integral of K(t; y) h_m(t)/c(t). Degenerate nodes pay exactly 1.
  void gaussian_payoffs(std::span<const std::uint32_t> active, double y, const GaussianKernel& kernel,
                        std::span<double> ratios) const;

  /// beta_m += eta * beta_m * (ratio_m - 1) for every active participant using
  /// the configured kernel. When `deltas` is nonempty it receives the change
  /// per active entry. Returns false (and changes nothing) if the instance was
  /// skipped.
  bool update(std::span<const std::uint32_t> active, double y, std::span<double> deltas = {});
  bool delta_update(std::span<const std::uint32_t> active, double y, std::span<double> deltas = {});
  bool gaussian_update(std::span<const std::uint32_t> active, double y, std::span<double> deltas = {});

 private:
  bool apply(std::span<const std::uint32_t> active, std::span<double> deltas);
  // Fills log_density_ with log h_m(y) and returns its max over funded entries.
  double log_densities(std::span<const std::uint32_t> active, double y) const;

  std::vector<double> budgets_;
  std::vector<double> means_;
  std::vector<double> variances_;
  std::vector<double> log_norm_;      // -log(sqrt(2 pi var))
  std::vector<double> inv_two_var_;   // 1 / (2 var)
  double eta_ = 0.0;
  RewardKernel kernel_;
  std::size_t skipped_ = 0;

  mutable std::vector<double> log_density_;
  std::vector<double> ratio_;
  std::vector<double> node_ratio_;
};

struct ParticipantId {
  std::uint32_t tree = 0;
  std::uint32_t node = 0;

  friend bool operator==(const ParticipantId&, const ParticipantId&) = default;
};

struct ActiveEntry {
  std::uint32_t participant = 0;
  double budget = 0.0;
  GaussianLeaf leaf;
};

/// The participants that bet on one instance: exactly one leaf per tree.
struct ActiveSet {
  std::vector<ActiveEntry> entries;

  double mass() const;
};

/// Specialized market whose participants are the depth-capped leaves of a
/// forest: a node is a participant if it is a leaf no deeper than the cap or
/// an internal node exactly at the cap.
class ForestMarket {
 public:
  ForestMarket(std::shared_ptr<const Forest> forest, std::uint32_t depth_cap, double eta, RewardKernel kernel);

  const Forest& forest() const { return *forest_; }
  std::shared_ptr<const Forest> forest_ptr() const { return forest_; }
  std::uint32_t depth_cap() const { return depth_cap_; }
  Market& market() { return market_; }
  const Market& market() const { return market_; }

  std::size_t participants() const { return ids_.size(); }
  const ParticipantId& participant(std::size_t index) const { return ids_[index]; }
  /// Participant index of a tree node, or -1 when the node does not bet.
  std::int64_t participant_index(std::size_t tree, std::size_t node) const;

  /// Writes one participant index per tree into `out` (size = forest size).
  void active_indices(std::span<const double> x, std::span<std::uint32_t> out) const;
  std::vector<std::uint32_t> active_indices(std::span<const double> x) const;
  ActiveSet active_set(std::span<const double> x) const;

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Dataset& data) const;
  double price_density(std::span<const double> x, double y) const;

  /// Apply one update for (x, y). Returned deltas follow active_set order and
  /// are empty when the instance was skipped.
  std::vector<double> update(std::span<const double> x, double y);
  std::vector<double> delta_update(std::span<const double> x, double y);
  std::vector<double> gaussian_update(std::span<const double> x, double y);

 private:
  void check_width(std::span<const double> x) const;

  std::shared_ptr<const Forest> forest_;
  std::uint32_t depth_cap_;
  std::vector<ParticipantId> ids_;
  std::vector<std::vector<std::int32_t>> node_to_participant_;
  Market market_;
};

/// eta = 10 / N_train, the default learning-rate rule.
double default_eta(std::size_t train_rows);

struct TrainingCurve {
  double initial_train_mse = 0.0;  // before any update (uniform budgets)
  double initial_test_mse = 0.0;
  std::vector<double> train_mse;   // after each epoch
  std::vector<double> test_mse;
  std::size_t best_epoch = 0;      // 1-based epoch with the lowest test MSE
  double best_test_mse = 0.0;
  double final_test_mse = 0.0;
  std::size_t skipped = 0;
};

struct TrainOptions {
  bool shuffle = false;  // shuffle the instance order once before epoch 1
  std::uint64_t seed = 0;
};

/// Passes over `train` `epochs` times in a fixed order, updating budgets with
/// the market's kernel, and records both MSEs after every epoch. Throws
/// std::logic_error if the total budget drifts from 1 by more than 1e-9.
TrainingCurve train_epochs(ForestMarket& market, const Dataset& train, const Dataset& test, std::size_t epochs,
                           const TrainOptions& options = {});

inline constexpr double kBudgetTolerance = 1e-9;

/// alpha grid {0.05, 0.10, ..., 1.00}.
std::vector<double> default_alpha_grid();

struct SigmaSelection {
  double sigma = 0.0;
  double alpha = 0.0;
  double rms = 0.0;                    // sqrt(mean y^2) of the training responses
  std::vector<double> alphas;
  std::vector<double> cv_mse;          // mean held-out MSE per alpha
};

struct SigmaSearch {
  std::vector<double> alpha_grid = default_alpha_grid();
  std::size_t folds = 2;
  std::size_t epochs = 50;
  int quadrature_points = 5;
  std::uint32_t depth_cap = kUnboundedDepth;
  double eta = 0.0;  // <= 0 selects default_eta(fold train rows)
};

/// Cross-validated Gaussian-kernel bandwidth sigma = alpha * sqrt(mean y^2).
/// Each fold grows one forest with `forest_params` and trains a market per
/// alpha; a fold's score is its lowest held-out MSE over the epochs.
SigmaSelection select_sigma(const Dataset& train, const ForestParams& forest_params, const SigmaSearch& search,
                            Rng& rng);

/// Versioned text snapshot of a market: configuration, forest fingerprint
/// and every participant budget.
void write_market(std::ostream& out, const ForestMarket& market);
ForestMarket read_market(std::istream& in, std::shared_ptr<const Forest> forest);
void save_market(const ForestMarket& market, const std::filesystem::path& path);
ForestMarket load_market(const std::filesystem::path& path, std::shared_ptr<const Forest> forest);

}  // namespace regmarket
