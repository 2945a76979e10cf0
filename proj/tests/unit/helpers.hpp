#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "regmarket/dataset.hpp"

namespace regmarket::testing {

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "regmarket_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

inline std::filesystem::path write_file(const std::string& name, const std::string& text) {
  auto path = temp_path(name);
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

/// One-feature dataset from parallel x and y vectors.
inline Dataset line_data(const std::vector<double>& x, const std::vector<double>& y) {
  return Dataset("line", {"x"}, "y", x, y);
}

inline Dataset random_data(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> f(rows * cols), y(rows);
  for (auto& v : f) v = u(rng);
  for (std::size_t i = 0; i < rows; ++i) y[i] = 3.0 * f[i * cols] + u(rng);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cols; ++c) names.push_back("x" + std::to_string(c));
  return Dataset("random", names, "y", f, y);
}

}  // namespace regmarket::testing
