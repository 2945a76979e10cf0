#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace regmarket {

/// n-point Gauss-Hermite rule for the weight exp(-t^2): nodes ascending and
/// mirrored exactly about zero.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

inline constexpr int kMaxQuadraturePoints = 64;

/// Roots of the physicists' Hermite polynomial H_n found by Newton iteration
/// on the orthonormal recurrence; supports 1 <= n <= 64.
QuadratureRule hermite_gauss(int n);

/// Sum_i w_i g(t_i), approximating the integral of exp(-t^2) g(t).
template <class F>
double integrate(const QuadratureRule& rule, F&& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) s += rule.weights[i] * g(rule.nodes[i]);
  return s;
}

/// Denominators below this are treated as degenerate: the node contributes a
/// ratio of exactly 1.
inline constexpr double kDegeneratePrice = 1e-300;

/// Gaussian-kernel expectation of numerator/denominator around y:
///   (1/sqrt(pi)) sum_i w_i num(y + sqrt(2) sigma t_i) / den(y + sqrt(2) sigma t_i).
template <class Num, class Den>
double integrate_ratio(const QuadratureRule& rule, double y, double sigma, Num&& numerator, Den&& denominator) {
  const double scale = std::numbers::sqrt2 * sigma;
  double s = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double t = y + scale * rule.nodes[i];
    const double den = denominator(t);
    s += rule.weights[i] * (den < kDegeneratePrice ? 1.0 : numerator(t) / den);
  }
  return s * std::numbers::inv_sqrtpi;
}

}  // namespace regmarket
