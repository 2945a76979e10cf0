#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "regmarket/random.hpp"

namespace regmarket {

struct ResponseRange {
  double min = 0.0;
  double max = 0.0;

  double width() const { return max - min; }
};

/// Row-major feature matrix with a real-valued response per row.
///
/// Immutable after construction; every accessor is safe to call from
/// concurrent experiment runs.
class Dataset {
 public:
  Dataset(std::string name, std::vector<std::string> feature_names, std::string target_name,
          std::vector<double> features, std::vector<double> response);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::string& target_name() const { return target_name_; }

  std::size_t rows() const { return response_.size(); }
  std::size_t cols() const { return feature_names_.size(); }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * cols(), cols()};
  }
  double response(std::size_t i) const { return response_[i]; }
  std::span<const double> responses() const { return response_; }
  std::span<const double> features() const { return features_; }
  const ResponseRange& response_range() const { return range_; }

  /// Copies the given rows (in the given order) into a new dataset.
  Dataset subset(std::span<const std::size_t> indices, std::string name) const;

 private:
  std::string name_;
  std::vector<std::string> feature_names_;
  std::string target_name_;
  std::vector<double> features_;
  std::vector<double> response_;
  ResponseRange range_;
};

/// Raised for malformed CSV input. Row and column are 1-based positions in
/// the file (the header is row 1); zero means "not applicable".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t column)
      : std::runtime_error(what), row_(row), column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

/// Loads a headered CSV file. `target` names the response column; a purely
/// numeric string that matches no header is taken as a 0-based column index.
/// Quoted fields ("..." with "" escapes) are accepted.
Dataset load_csv(const std::filesystem::path& path, std::string_view target, char delimiter = ',');

/// Writes features followed by the response column, shortest round-trip
/// formatting for every value.
void save_csv(const Dataset& data, const std::filesystem::path& path, char delimiter = ',');

struct Split {
  Dataset train;
  Dataset test;
};

/// Number of rows set aside for testing: floor(fraction * n), at least 1.
/// Throws if the result would leave the train or test side empty.
std::size_t test_rows_for(std::size_t n, double fraction);

/// Partitions rows uniformly at random without replacement.
Split random_split(const Dataset& data, double fraction, Rng& rng);

/// Friedman's synthetic regression problems. `noise` toggles the additive
/// Gaussian term (sd 1, 125 and 0.1 for problems 1, 2 and 3).
Dataset generate_friedman(int which, std::size_t n, Rng& rng, bool noise = true);
Dataset generate_friedman(std::string_view name, std::size_t n, Rng& rng, bool noise = true);

/// Noise-free Friedman response for a single input vector.
double friedman_response(int which, std::span<const double> x);

/// Parses "friedman1".."friedman3"; returns 0 for anything else.
int friedman_id(std::string_view name);

}  // namespace regmarket
