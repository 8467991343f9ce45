#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "splr/error.hpp"

namespace splr {

struct quadrature_rule {
  std::vector<double> nodes;   // on [-1, 1], ascending
  std::vector<double> weights; // sum to 2
};

/// Legendre polynomial P_n(x) and its derivative by the three-term recurrence.
inline std::pair<double, double> legendre_with_derivative(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  // derivative from P_n and P_{n-1}; endpoints handled by the closed form
  if (std::abs(std::abs(x) - 1.0) < 1e-15) {
    const double sign = (x > 0.0 || n % 2 == 1) ? 1.0 : -1.0;
    return {p1, sign * 0.5 * n * (n + 1.0)};
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

/// n-point Gauss-Legendre rule by Newton iteration on P_n; exact for degree 2n-1.
inline quadrature_rule gauss_legendre(int n) {
  if (n < 1) throw invalid_argument("gauss_legendre: need at least one node");
  quadrature_rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre_with_derivative(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const auto [p, dp] = legendre_with_derivative(n, x);
    (void)p;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[n - 1 - i] = x;
    rule.nodes[i] = -x;
    rule.weights[n - 1 - i] = w;
    rule.weights[i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

} // namespace splr
