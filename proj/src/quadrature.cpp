#include "regmarket/quadrature.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace regmarket {

namespace {

struct HermiteValue {
  double p;   // orthonormal Hermite polynomial of degree n at t
  double dp;  // its derivative
};

HermiteValue orthonormal_hermite(int n, double t) {
  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  double p1 = pim4;
  double p2 = 0.0;
  for (int j = 1; j <= n; ++j) {
    const double p3 = p2;
    p2 = p1;
    p1 = t * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
  }
  return {p1, std::sqrt(2.0 * n) * p2};
}

}  // namespace

QuadratureRule hermite_gauss(int n) {
  if (n < 1 || n > kMaxQuadraturePoints)
    throw std::invalid_argument("Hermite-Gauss rule supports 1..64 points, got " + std::to_string(n));

  // Largest roots first; asymptotic starting guesses, then Newton.
  const int half = (n + 1) / 2;
  std::vector<double> roots(half);
  std::vector<double> weights(half);
  const double nd = n;
  double t = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0)
      t = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -0.16667);
    else if (i == 1)
      t -= 1.14 * std::pow(nd, 0.426) / t;
    else if (i == 2)
      t = 1.86 * t - 0.86 * roots[0];
    else if (i == 3)
      t = 1.91 * t - 0.91 * roots[1];
    else
      t = 2.0 * t - roots[i - 2];

    HermiteValue h{};
    for (int iter = 0; iter < 100; ++iter) {
      h = orthonormal_hermite(n, t);
      const double step = h.p / h.dp;
      t -= step;
      if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(t))) break;
    }
    h = orthonormal_hermite(n, t);
    roots[i] = t;
    weights[i] = 2.0 / (h.dp * h.dp);
  }
  if (n % 2 == 1) roots[half - 1] = 0.0;

  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < half; ++i) {
    rule.nodes[i] = -roots[i];
    rule.nodes[n - 1 - i] = roots[i];
    rule.weights[i] = weights[i];
    rule.weights[n - 1 - i] = weights[i];
  }
  return rule;
}

}  // namespace regmarket
