#include "regmarket/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "regmarket/format.hpp"

namespace regmarket {

Dataset::Dataset(std::string name, std::vector<std::string> feature_names, std::string target_name,
                 std::vector<double> features, std::vector<double> response)
    : name_(std::move(name)),
      feature_names_(std::move(feature_names)),
      target_name_(std::move(target_name)),
      features_(std::move(features)),
      response_(std::move(response)) {
  if (feature_names_.empty()) throw std::invalid_argument("dataset needs at least one feature");
  if (response_.empty()) throw std::invalid_argument("dataset needs at least one row");
  if (features_.size() != response_.size() * feature_names_.size())
    throw std::invalid_argument("feature matrix size does not match rows x columns");
  auto [lo, hi] = std::minmax_element(response_.begin(), response_.end());
  range_ = {*lo, *hi};
}

Dataset Dataset::subset(std::span<const std::size_t> indices, std::string name) const {
  std::vector<double> features;
  std::vector<double> response;
  features.reserve(indices.size() * cols());
  response.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= rows()) throw std::out_of_range("subset row index out of range");
    auto r = row(i);
    features.insert(features.end(), r.begin(), r.end());
    response.push_back(response_[i]);
  }
  return Dataset(std::move(name), feature_names_, target_name_, std::move(features),
                 std::move(response));
}

namespace {

using Record = std::vector<std::string>;

// RFC 4180 records: quoted fields may contain delimiters, newlines and "" escapes.
std::vector<Record> parse_records(const std::string& text, char delimiter) {
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    current.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    bool blank = current.size() == 1 && current.front().empty();
    if (!blank) records.push_back(std::move(current));
    current.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (ch == delimiter) {
      end_field();
    } else if (ch == '\n') {
      ++line;
      end_record();
    } else if (ch == '\r') {
      // tolerated before \n
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field near line " + std::to_string(line), line, 0);
  if (field_started || !field.empty() || !current.empty()) end_record();
  return records;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::size_t resolve_target(const Record& header, std::string_view target) {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (trim(header[c]) == trim(target)) return c;
  std::size_t index = 0;
  auto t = trim(target);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), index);
  if (!t.empty() && ec == std::errc() && ptr == t.data() + t.size() && index < header.size())
    return index;
  throw ParseError("target column '" + std::string(target) + "' not found", 1, 0);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::string_view target, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto records = parse_records(buffer.str(), delimiter);
  if (records.empty()) throw ParseError("'" + path.string() + "' is empty", 0, 0);

  const Record& header = records.front();
  std::size_t target_col = resolve_target(header, target);
  if (header.size() < 2) throw ParseError("need at least one feature column besides the target", 1, 0);
  if (records.size() < 2) throw ParseError("'" + path.string() + "' has no data rows", 0, 0);

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target_col) names.emplace_back(trim(header[c]));

  std::vector<double> features;
  std::vector<double> response;
  features.reserve((records.size() - 1) * names.size());
  response.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const Record& rec = records[r];
    if (rec.size() != header.size())
      throw ParseError("row " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) +
                           " fields, expected " + std::to_string(header.size()),
                       r + 1, 0);
    for (std::size_t c = 0; c < rec.size(); ++c) {
      double value = 0.0;
      if (!parse_double(rec[c], value))
        throw ParseError("cannot parse cell '" + rec[c] + "' at row " + std::to_string(r + 1) +
                             ", column " + std::to_string(c + 1) + " (" + header[c] + ")",
                         r + 1, c + 1);
      if (c == target_col)
        response.push_back(value);
      else
        features.push_back(value);
    }
  }
  return Dataset(path.stem().string(), std::move(names), std::string(trim(header[target_col])),
                 std::move(features), std::move(response));
}

namespace {

std::string quote_if_needed(const std::string& s, char delimiter) {
  if (s.find_first_of(std::string{delimiter, '"', '\n', '\r'}) == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void save_csv(const Dataset& data, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (const auto& name : data.feature_names()) out << quote_if_needed(name, delimiter) << delimiter;
  out << quote_if_needed(data.target_name(), delimiter) << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (double v : data.row(i)) out << format_double(v) << delimiter;
    out << format_double(data.response(i)) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::size_t test_rows_for(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  auto test = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  test = std::max<std::size_t>(test, 1);
  if (test >= n)
    throw std::invalid_argument("test fraction " + format_double(fraction) + " leaves no training rows for N=" +
                                std::to_string(n));
  return test;
}

Split random_split(const Dataset& data, double fraction, Rng& rng) {
  std::size_t test_rows = test_rows_for(data.rows(), fraction);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with an explicit uniform draw keeps the partition independent
  // of the standard library's shuffle implementation.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  std::span<const std::size_t> all(order);
  std::vector<std::size_t> test(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(test_rows));
  std::vector<std::size_t> train(all.begin() + static_cast<std::ptrdiff_t>(test_rows), all.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train, data.name() + "-train"), data.subset(test, data.name() + "-test")};
}

int friedman_id(std::string_view name) {
  if (name == "friedman1") return 1;
  if (name == "friedman2") return 2;
  if (name == "friedman3") return 3;
  return 0;
}

double friedman_response(int which, std::span<const double> x) {
  using std::numbers::pi;
  switch (which) {
    case 1:
      return 10.0 * std::sin(pi * x[0] * x[1]) + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] +
             5.0 * x[4];
    case 2: {
      double inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
      return std::sqrt(x[0] * x[0] + inner * inner);
    }
    case 3:
      return std::atan((x[1] * x[2] - 1.0 / (x[1] * x[3])) / x[0]);
    default:
      throw std::invalid_argument("unknown Friedman problem " + std::to_string(which));
  }
}

Dataset generate_friedman(int which, std::size_t n, Rng& rng, bool noise) {
  using std::numbers::pi;
  if (which < 1 || which > 3) throw std::invalid_argument("unknown Friedman problem " + std::to_string(which));
  if (n == 0) throw std::invalid_argument("friedman generator needs n >= 1");

  const std::size_t cols = which == 1 ? 10 : 4;
  struct Bounds {
    double lo, hi;
  };
  std::vector<Bounds> bounds(cols, Bounds{0.0, 1.0});
  if (which != 1) bounds = {{0.0, 100.0}, {40.0 * pi, 560.0 * pi}, {0.0, 1.0}, {1.0, 11.0}};
  const double noise_sd = which == 1 ? 1.0 : which == 2 ? 125.0 : 0.1;

  std::vector<double> features(n * cols);
  std::vector<double> response(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, noise_sd);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> x(features.data() + i * cols, cols);
    for (std::size_t c = 0; c < cols; ++c) x[c] = bounds[c].lo + (bounds[c].hi - bounds[c].lo) * unit(rng);
    response[i] = friedman_response(which, x);
    if (noise) response[i] += gauss(rng);
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cols; ++c) names.push_back("x" + std::to_string(c + 1));
  return Dataset("friedman" + std::to_string(which), std::move(names), "y", std::move(features),
                 std::move(response));
}

Dataset generate_friedman(std::string_view name, std::size_t n, Rng& rng, bool noise) {
  int which = friedman_id(name);
  if (which == 0) throw std::invalid_argument("unknown generator '" + std::string(name) + "'");
  return generate_friedman(which, n, rng, noise);
}

}  // namespace regmarket
