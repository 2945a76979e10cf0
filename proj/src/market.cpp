#include "regmarket/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "regmarket/stats.hpp"

namespace regmarket {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogDegeneratePrice = std::log(kDegeneratePrice);

void check_eta(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("learning rate must lie in [0, 1]");
}

void check_kernel(const RewardKernel& kernel) {
  if (const auto* g = std::get_if<GaussianKernel>(&kernel)) {
    if (!(g->sigma > 0.0) || !std::isfinite(g->sigma)) throw std::invalid_argument("kernel sigma must be positive");
    if (g->rule.size() == 0) throw std::invalid_argument("Gaussian kernel needs a quadrature rule");
  }
}

}  // namespace

GaussianKernel gaussian_kernel(double sigma, int points) {
  GaussianKernel k{sigma, hermite_gauss(points)};
  check_kernel(k);
  return k;
}

double log_normal_pdf(double y, double mean, double variance) {
  const double d = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - d * d / (2.0 * variance);
}

Market::Market(std::span<const GaussianLeaf> participants, double eta, RewardKernel kernel)
    : eta_(eta), kernel_(std::move(kernel)) {
  if (participants.empty()) throw std::invalid_argument("market needs at least one participant");
  check_eta(eta_);
  check_kernel(kernel_);
  const std::size_t m = participants.size();
  budgets_.assign(m, 1.0 / static_cast<double>(m));
  means_.resize(m);
  variances_.resize(m);
  log_norm_.resize(m);
  inv_two_var_.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& p = participants[i];
    if (!(p.variance > 0.0)) throw std::invalid_argument("participant variance must be positive");
    means_[i] = p.mean;
    variances_[i] = p.variance;
    log_norm_[i] = -0.5 * std::log(2.0 * std::numbers::pi * p.variance);
    inv_two_var_[i] = 0.5 / p.variance;
  }
}

void Market::set_budgets(std::span<const double> budgets) {
  if (budgets.size() != budgets_.size()) throw std::invalid_argument("budget vector has the wrong length");
  for (double b : budgets)
    if (!(b >= 0.0) || !std::isfinite(b)) throw std::invalid_argument("budgets must be finite and nonnegative");
  budgets_.assign(budgets.begin(), budgets.end());
}

double Market::budget_sum() const { return std::accumulate(budgets_.begin(), budgets_.end(), 0.0); }

void Market::set_eta(double eta) {
  check_eta(eta);
  eta_ = eta;
}

void Market::set_kernel(RewardKernel kernel) {
  check_kernel(kernel);
  kernel_ = std::move(kernel);
}

double Market::active_mass(std::span<const std::uint32_t> active) const {
  double mass = 0.0;
  for (auto a : active) mass += budgets_[a];
  return mass;
}

namespace {

// Writes exp(log h_m(y) - peak) per active entry into `work` and returns
// log c(y), or -inf when no funded participant has nonzero density.
double relative_densities(std::span<const std::uint32_t> active, double y, double mass,
                          std::span<const double> budgets, std::span<const double> means,
                          std::span<const double> log_norm, std::span<const double> inv_two_var,
                          std::span<double> work) {
  double peak = kNegInf;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto a = active[k];
    const double d = y - means[a];
    work[k] = log_norm[a] - d * d * inv_two_var[a];
    if (budgets[a] > 0.0) peak = std::max(peak, work[k]);
  }
  if (peak == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t k = 0; k < active.size(); ++k) {
    work[k] = std::exp(work[k] - peak);
    s += budgets[active[k]] * work[k];
  }
  if (!(s > 0.0)) return kNegInf;
  return peak + std::log(s / mass);
}

}  // namespace

double Market::price_density(std::span<const std::uint32_t> active, double y) const {
  const double mass = active_mass(active);
  if (!(mass > 0.0)) throw std::domain_error("active budget mass is zero");
  std::vector<double> work(active.size());
  const double log_c = relative_densities(active, y, mass, budgets_, means_, log_norm_, inv_two_var_, work);
  return std::exp(log_c);
}

double Market::predict(std::span<const std::uint32_t> active) const {
  double mass = 0.0;
  double weighted = 0.0;
  for (auto a : active) {
    mass += budgets_[a];
    weighted += budgets_[a] * means_[a];
  }
  if (!(mass > 0.0)) throw std::domain_error("active budget mass is zero");
  return weighted / mass;
}

bool Market::delta_payoffs(std::span<const std::uint32_t> active, double y, std::span<double> ratios) const {
  if (ratios.size() < active.size()) throw std::invalid_argument("ratio buffer too small");
  const double mass = active_mass(active);
  if (!(mass > 0.0)) return false;
  const double log_c = relative_densities(active, y, mass, budgets_, means_, log_norm_, inv_two_var_, ratios);
  if (!(log_c >= kLogDegeneratePrice)) return false;
  // ratios hold h_m / exp(peak); c / exp(peak) = exp(log_c - peak) is folded in below.
  double s = 0.0;
  for (std::size_t k = 0; k < active.size(); ++k) s += budgets_[active[k]] * ratios[k];
  const double scale = mass / s;
  for (std::size_t k = 0; k < active.size(); ++k) ratios[k] *= scale;
  return true;
}

void Market::gaussian_payoffs(std::span<const std::uint32_t> active, double y, const GaussianKernel& kernel,
                              std::span<double> ratios) const {
  if (ratios.size() < active.size()) throw std::invalid_argument("ratio buffer too small");
  std::vector<double> work(active.size());
  std::fill(ratios.begin(), ratios.begin() + static_cast<std::ptrdiff_t>(active.size()), 0.0);
  const double scale = std::numbers::sqrt2 * kernel.sigma;
  for (std::size_t i = 0; i < kernel.rule.size(); ++i) {
    const double w = kernel.rule.weights[i];
    if (delta_payoffs(active, y + scale * kernel.rule.nodes[i], work)) {
      for (std::size_t k = 0; k < active.size(); ++k) ratios[k] += w * work[k];
    } else {
      for (std::size_t k = 0; k < active.size(); ++k) ratios[k] += w;
    }
  }
  for (std::size_t k = 0; k < active.size(); ++k) ratios[k] *= std::numbers::inv_sqrtpi;
}

bool Market::apply(std::span<const std::uint32_t> active, std::span<double> deltas) {
  if (!deltas.empty() && deltas.size() < active.size()) throw std::invalid_argument("delta buffer too small");
  for (std::size_t k = 0; k < active.size(); ++k) {
    double& beta = budgets_[active[k]];
    // Unfunded participants stay at zero; their ratio may be inf.
    const double change = beta > 0.0 ? eta_ * beta * (ratio_[k] - 1.0) : 0.0;
    beta += change;
    if (!deltas.empty()) deltas[k] = change;
  }
  return true;
}

bool Market::delta_update(std::span<const std::uint32_t> active, double y, std::span<double> deltas) {
  ratio_.resize(active.size());
  if (!delta_payoffs(active, y, ratio_)) {
    ++skipped_;
    return false;
  }
  return apply(active, deltas);
}

bool Market::gaussian_update(std::span<const std::uint32_t> active, double y, std::span<double> deltas) {
  const auto* kernel = std::get_if<GaussianKernel>(&kernel_);
  if (kernel == nullptr) throw std::logic_error("gaussian_update requires a Gaussian reward kernel");
  if (!(active_mass(active) > 0.0)) {
    ++skipped_;
    return false;
  }
  ratio_.resize(active.size());
  node_ratio_.resize(active.size());
  std::fill(ratio_.begin(), ratio_.end(), 0.0);
  const double scale = std::numbers::sqrt2 * kernel->sigma;
  for (std::size_t i = 0; i < kernel->rule.size(); ++i) {
    const double w = kernel->rule.weights[i];
    if (delta_payoffs(active, y + scale * kernel->rule.nodes[i], node_ratio_)) {
      for (std::size_t k = 0; k < active.size(); ++k) ratio_[k] += w * node_ratio_[k];
    } else {
      for (std::size_t k = 0; k < active.size(); ++k) ratio_[k] += w;
    }
  }
  for (auto& r : ratio_) r *= std::numbers::inv_sqrtpi;
  return apply(active, deltas);
}

bool Market::update(std::span<const std::uint32_t> active, double y, std::span<double> deltas) {
  if (std::holds_alternative<DeltaKernel>(kernel_)) return delta_update(active, y, deltas);
  return gaussian_update(active, y, deltas);
}

double ActiveSet::mass() const {
  double m = 0.0;
  for (const auto& e : entries) m += e.budget;
  return m;
}

namespace {

std::vector<GaussianLeaf> collect_participants(const Forest& forest, std::uint32_t depth_cap,
                                               std::vector<ParticipantId>& ids,
                                               std::vector<std::vector<std::int32_t>>& node_map) {
  std::vector<GaussianLeaf> leaves;
  node_map.resize(forest.size());
  for (std::size_t t = 0; t < forest.size(); ++t) {
    const auto& nodes = forest.tree(t).nodes();
    node_map[t].assign(nodes.size(), -1);
    for (std::size_t n = 0; n < nodes.size(); ++n) {
      const auto& node = nodes[n];
      const bool bets = node.stats.depth <= depth_cap && (node.is_leaf() || node.stats.depth == depth_cap);
      if (!bets) continue;
      node_map[t][n] = static_cast<std::int32_t>(ids.size());
      ids.push_back({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(n)});
      leaves.push_back(node.stats);
    }
  }
  return leaves;
}

}  // namespace

ForestMarket::ForestMarket(std::shared_ptr<const Forest> forest, std::uint32_t depth_cap, double eta,
                           RewardKernel kernel)
    : forest_(std::move(forest)),
      depth_cap_(depth_cap),
      market_([&] {
        if (!forest_ || forest_->size() == 0) throw std::invalid_argument("market needs a nonempty forest");
        auto leaves = collect_participants(*forest_, depth_cap_, ids_, node_to_participant_);
        return Market(leaves, eta, std::move(kernel));
      }()) {}

std::int64_t ForestMarket::participant_index(std::size_t tree, std::size_t node) const {
  if (tree >= node_to_participant_.size() || node >= node_to_participant_[tree].size()) return -1;
  return node_to_participant_[tree][node];
}

void ForestMarket::check_width(std::span<const double> x) const {
  if (x.size() != forest_->num_inputs())
    throw std::invalid_argument("instance has " + std::to_string(x.size()) + " inputs, forest expects " +
                                std::to_string(forest_->num_inputs()));
}

void ForestMarket::active_indices(std::span<const double> x, std::span<std::uint32_t> out) const {
  const auto& trees = forest_->trees();
  for (std::size_t t = 0; t < trees.size(); ++t)
    out[t] = static_cast<std::uint32_t>(node_to_participant_[t][trees[t].node_index(x, depth_cap_)]);
}

std::vector<std::uint32_t> ForestMarket::active_indices(std::span<const double> x) const {
  check_width(x);
  std::vector<std::uint32_t> out(forest_->size());
  active_indices(x, out);
  return out;
}

ActiveSet ForestMarket::active_set(std::span<const double> x) const {
  ActiveSet set;
  for (auto p : active_indices(x)) {
    const auto& id = ids_[p];
    set.entries.push_back({p, market_.budgets()[p], forest_->tree(id.tree).node(id.node).stats});
  }
  return set;
}

double ForestMarket::predict(std::span<const double> x) const { return market_.predict(active_indices(x)); }

std::vector<double> ForestMarket::predict(const Dataset& data) const {
  if (data.cols() != forest_->num_inputs()) throw std::invalid_argument("dataset width does not match the forest");
  std::vector<std::uint32_t> active(forest_->size());
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    active_indices(data.row(i), active);
    out[i] = market_.predict(active);
  }
  return out;
}

double ForestMarket::price_density(std::span<const double> x, double y) const {
  return market_.price_density(active_indices(x), y);
}

std::vector<double> ForestMarket::update(std::span<const double> x, double y) {
  auto active = active_indices(x);
  std::vector<double> deltas(active.size());
  if (!market_.update(active, y, deltas)) return {};
  return deltas;
}

std::vector<double> ForestMarket::delta_update(std::span<const double> x, double y) {
  auto active = active_indices(x);
  std::vector<double> deltas(active.size());
  if (!market_.delta_update(active, y, deltas)) return {};
  return deltas;
}

std::vector<double> ForestMarket::gaussian_update(std::span<const double> x, double y) {
  auto active = active_indices(x);
  std::vector<double> deltas(active.size());
  if (!market_.gaussian_update(active, y, deltas)) return {};
  return deltas;
}

double default_eta(std::size_t train_rows) {
  if (train_rows == 0) throw std::invalid_argument("learning rate needs a nonempty training set");
  return 10.0 / static_cast<double>(train_rows);
}

namespace {

// Active participant indices of every row, row-major (rows x trees).
std::vector<std::uint32_t> cache_active(const ForestMarket& market, const Dataset& data) {
  if (data.cols() != market.forest().num_inputs())
    throw std::invalid_argument("dataset width does not match the forest");
  const std::size_t t = market.forest().size();
  std::vector<std::uint32_t> cache(data.rows() * t);
  for (std::size_t i = 0; i < data.rows(); ++i)
    market.active_indices(data.row(i), std::span<std::uint32_t>(cache.data() + i * t, t));
  return cache;
}

double cached_mse(const Market& market, const Dataset& data, std::span<const std::uint32_t> cache, std::size_t t) {
  double sse = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double d = market.predict(cache.subspan(i * t, t)) - data.response(i);
    sse += d * d;
  }
  return sse / static_cast<double>(data.rows());
}

}  // namespace

TrainingCurve train_epochs(ForestMarket& market, const Dataset& train, const Dataset& test, std::size_t epochs,
                           const TrainOptions& options) {
  if (epochs == 0) throw std::invalid_argument("training needs at least one epoch");
  const std::size_t t = market.forest().size();
  const auto train_cache = cache_active(market, train);
  const auto test_cache = cache_active(market, test);

  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.shuffle) {
    Rng rng = make_rng(options.seed, stream_tag("order"));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
  }

  Market& m = market.market();
  const std::size_t skipped_before = m.skipped();
  const double initial_sum = m.budget_sum();
  TrainingCurve curve;
  curve.initial_train_mse = cached_mse(m, train, train_cache, t);
  curve.initial_test_mse = cached_mse(m, test, test_cache, t);
  std::span<const std::uint32_t> cache(train_cache);
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t i : order) m.update(cache.subspan(i * t, t), train.response(i));
    const double drift = std::abs(m.budget_sum() - initial_sum);
    if (drift > kBudgetTolerance)
      throw std::logic_error("budget sum drifted by " + std::to_string(drift) + " in epoch " + std::to_string(e + 1));
    curve.train_mse.push_back(cached_mse(m, train, train_cache, t));
    curve.test_mse.push_back(cached_mse(m, test, test_cache, t));
  }
  auto best = std::min_element(curve.test_mse.begin(), curve.test_mse.end());
  curve.best_epoch = static_cast<std::size_t>(best - curve.test_mse.begin()) + 1;
  curve.best_test_mse = *best;
  curve.final_test_mse = curve.test_mse.back();
  curve.skipped = m.skipped() - skipped_before;
  return curve;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 20; ++k) grid.push_back(0.05 * k);
  return grid;
}

SigmaSelection select_sigma(const Dataset& train, const ForestParams& forest_params, const SigmaSearch& search,
                            Rng& rng) {
  if (search.alpha_grid.empty()) throw std::invalid_argument("alpha grid is empty");
  for (double a : search.alpha_grid)
    if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("alpha values must lie in (0, 1]");
  if (search.folds < 2) throw std::invalid_argument("cross validation needs at least 2 folds");
  if (train.rows() < search.folds * std::max<std::size_t>(forest_params.min_split, 1))
    throw std::invalid_argument("training set too small for " + std::to_string(search.folds) + "-fold selection");

  SigmaSelection result;
  result.alphas = search.alpha_grid;
  double mean_sq = 0.0;
  for (double y : train.responses()) mean_sq += y * y;
  result.rms = std::sqrt(mean_sq / static_cast<double>(train.rows()));

  if (!(result.rms > 0.0)) {
    result.alpha = search.alpha_grid.front();
    result.sigma = std::sqrt(variance_floor(train.response_range(), forest_params.variance_floor_scale));
    return result;
  }
  if (search.alpha_grid.size() == 1) {
    result.alpha = search.alpha_grid.front();
    result.sigma = result.alpha * result.rms;
    return result;
  }

  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }

  result.cv_mse.assign(search.alpha_grid.size(), 0.0);
  for (std::size_t fold = 0; fold < search.folds; ++fold) {
    std::vector<std::size_t> fit_rows;
    std::vector<std::size_t> held_rows;
    for (std::size_t k = 0; k < order.size(); ++k) (k % search.folds == fold ? held_rows : fit_rows).push_back(order[k]);
    std::sort(fit_rows.begin(), fit_rows.end());
    std::sort(held_rows.begin(), held_rows.end());
    const Dataset fit = train.subset(fit_rows, train.name() + "-cvfit");
    const Dataset held = train.subset(held_rows, train.name() + "-cvheld");

    ForestParams params = forest_params;
    params.seed = rng();
    auto forest = std::make_shared<const Forest>(grow_forest(fit, params));
    const double eta = std::min(search.eta > 0.0 ? search.eta : default_eta(fit.rows()), 1.0);
    for (std::size_t a = 0; a < search.alpha_grid.size(); ++a) {
      ForestMarket market(forest, search.depth_cap, eta,
                          gaussian_kernel(search.alpha_grid[a] * result.rms, search.quadrature_points));
      auto curve = train_epochs(market, fit, held, search.epochs);
      result.cv_mse[a] += curve.best_test_mse / static_cast<double>(search.folds);
    }
  }
  auto best = std::min_element(result.cv_mse.begin(), result.cv_mse.end());
  result.alpha = search.alpha_grid[static_cast<std::size_t>(best - result.cv_mse.begin())];
  result.sigma = result.alpha * result.rms;
  return result;
}

}  // namespace regmarket
