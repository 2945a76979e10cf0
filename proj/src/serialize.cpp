#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "regmarket/format.hpp"
#include "regmarket/forest.hpp"
#include "regmarket/market.hpp"

namespace regmarket {

namespace {

constexpr std::string_view kForestMagic = "regmarket-forest";
constexpr std::string_view kMarketMagic = "regmarket-market";
constexpr int kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Whitespace-separated token reader with typed accessors.
class Tokens {
 public:
  explicit Tokens(std::istream& in) : in_(in) {}

  std::string word() {
    std::string s;
    if (!(in_ >> s)) throw FormatError("unexpected end of input");
    return s;
  }
  void expect(std::string_view keyword) {
    auto w = word();
    if (w != keyword) throw FormatError("expected '" + std::string(keyword) + "', found '" + w + "'");
  }
  template <class T>
  T number() {
    auto w = word();
    T v{};
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw FormatError("bad number '" + w + "'");
    return v;
  }

 private:
  std::istream& in_;
};

std::string depth_text(std::uint32_t depth) {
  return depth == kUnboundedDepth ? "unbounded" : std::to_string(depth);
}

std::uint32_t parse_depth(Tokens& tok) {
  auto w = tok.word();
  if (w == "unbounded") return kUnboundedDepth;
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || ptr != w.data() + w.size()) throw FormatError("bad depth '" + w + "'");
  return v;
}

void read_version(Tokens& tok, std::string_view magic) {
  tok.expect(magic);
  auto version = tok.number<int>();
  if (version != kFormatVersion) throw FormatError("unsupported format version " + std::to_string(version));
}

}  // namespace

void write_forest(std::ostream& out, const Forest& forest) {
  const auto& p = forest.params();
  out << kForestMagic << ' ' << kFormatVersion << '\n';
  out << "inputs " << forest.num_inputs() << '\n';
  out << "variance_floor " << format_double(forest.variance_floor()) << '\n';
  out << "params trees " << p.trees << " candidates " << p.candidates << " pool " << p.pool_size << " min_split "
      << p.min_split << " max_depth " << depth_text(p.max_depth) << " seed " << p.seed << " bootstrap "
      << (p.bootstrap ? 1 : 0) << " floor_scale " << format_double(p.variance_floor_scale) << '\n';
  out << "trees " << forest.size() << '\n';
  for (const auto& tree : forest.trees()) {
    out << "tree " << tree.size() << '\n';
    // left right input0 input1 coef0 coef1 threshold mean variance count depth
    for (const auto& n : tree.nodes()) {
      out << n.left << ' ' << n.right << ' ' << n.feature.inputs[0] << ' ' << n.feature.inputs[1] << ' '
          << format_double(n.feature.coefficients[0]) << ' ' << format_double(n.feature.coefficients[1]) << ' '
          << format_double(n.threshold) << ' ' << format_double(n.stats.mean) << ' '
          << format_double(n.stats.variance) << ' ' << n.stats.count << ' ' << n.stats.depth << '\n';
    }
  }
}

Forest read_forest(std::istream& in) {
  Tokens tok(in);
  read_version(tok, kForestMagic);
  tok.expect("inputs");
  auto inputs = tok.number<std::size_t>();
  tok.expect("variance_floor");
  auto floor = tok.number<double>();
  ForestParams p;
  tok.expect("params");
  tok.expect("trees");
  p.trees = tok.number<std::size_t>();
  tok.expect("candidates");
  p.candidates = tok.number<std::size_t>();
  tok.expect("pool");
  p.pool_size = tok.number<std::size_t>();
  tok.expect("min_split");
  p.min_split = tok.number<std::size_t>();
  tok.expect("max_depth");
  p.max_depth = parse_depth(tok);
  tok.expect("seed");
  p.seed = tok.number<std::uint64_t>();
  tok.expect("bootstrap");
  p.bootstrap = tok.number<int>() != 0;
  tok.expect("floor_scale");
  p.variance_floor_scale = tok.number<double>();
  tok.expect("trees");
  auto count = tok.number<std::size_t>();
  std::vector<Tree> trees;
  trees.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    tok.expect("tree");
    auto size = tok.number<std::size_t>();
    std::vector<TreeNode> nodes(size);
    for (auto& n : nodes) {
      n.left = tok.number<std::int32_t>();
      n.right = tok.number<std::int32_t>();
      n.feature.inputs[0] = tok.number<std::uint32_t>();
      n.feature.inputs[1] = tok.number<std::uint32_t>();
      n.feature.coefficients[0] = tok.number<double>();
      n.feature.coefficients[1] = tok.number<double>();
      n.threshold = tok.number<double>();
      n.stats.mean = tok.number<double>();
      n.stats.variance = tok.number<double>();
      n.stats.count = tok.number<std::uint32_t>();
      n.stats.depth = tok.number<std::uint32_t>();
      if (!n.is_leaf() && (n.feature.inputs[0] >= inputs || n.feature.inputs[1] >= inputs))
        throw FormatError("node feature references a missing input");
    }
    trees.emplace_back(std::move(nodes));
  }
  return Forest(p, inputs, floor, std::move(trees));
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_forest(out, forest);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_forest(in);
}

std::uint64_t forest_fingerprint(const Forest& forest) {
  std::ostringstream out;
  write_forest(out, forest);
  return stream_tag(out.str());
}

void write_market(std::ostream& out, const ForestMarket& market) {
  const Market& m = market.market();
  out << kMarketMagic << ' ' << kFormatVersion << '\n';
  out << "forest " << std::hex << forest_fingerprint(market.forest()) << std::dec << '\n';
  out << "depth_cap " << depth_text(market.depth_cap()) << '\n';
  out << "eta " << format_double(m.eta()) << '\n';
  if (const auto* g = std::get_if<GaussianKernel>(&m.kernel()))
    out << "kernel gaussian " << format_double(g->sigma) << ' ' << g->rule.size() << '\n';
  else
    out << "kernel delta\n";
  out << "participants " << market.participants() << '\n';
  for (std::size_t i = 0; i < market.participants(); ++i) {
    const auto& id = market.participant(i);
    out << id.tree << ' ' << id.node << ' ' << format_double(m.budgets()[i]) << '\n';
  }
}

ForestMarket read_market(std::istream& in, std::shared_ptr<const Forest> forest) {
  if (!forest) throw std::invalid_argument("read_market needs a forest");
  Tokens tok(in);
  read_version(tok, kMarketMagic);
  tok.expect("forest");
  std::uint64_t fingerprint = 0;
  {
    auto w = tok.word();
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), fingerprint, 16);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw FormatError("bad forest fingerprint '" + w + "'");
  }
  if (fingerprint != forest_fingerprint(*forest))
    throw FormatError("market was trained on a different forest (fingerprint mismatch)");
  tok.expect("depth_cap");
  auto cap = parse_depth(tok);
  tok.expect("eta");
  auto eta = tok.number<double>();
  tok.expect("kernel");
  RewardKernel kernel = DeltaKernel{};
  if (auto kind = tok.word(); kind == "gaussian") {
    auto sigma = tok.number<double>();
    auto points = tok.number<int>();
    kernel = gaussian_kernel(sigma, points);
  } else if (kind != "delta") {
    throw FormatError("unknown kernel '" + kind + "'");
  }
  ForestMarket market(std::move(forest), cap, eta, std::move(kernel));
  tok.expect("participants");
  auto count = tok.number<std::size_t>();
  if (count != market.participants()) throw FormatError("participant count does not match the forest");
  std::vector<double> budgets(count);
  for (std::size_t i = 0; i < count; ++i) {
    ParticipantId id{tok.number<std::uint32_t>(), tok.number<std::uint32_t>()};
    if (!(id == market.participant(i))) throw FormatError("participant order does not match the forest");
    budgets[i] = tok.number<double>();
  }
  market.market().set_budgets(budgets);
  return market;
}

void save_market(const ForestMarket& market, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_market(out, market);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

ForestMarket load_market(const std::filesystem::path& path, std::shared_ptr<const Forest> forest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_market(in, std::move(forest));
}

}  // namespace regmarket
