#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace roughfilter {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// Gauss-Legendre rule with n points (Newton iteration on P_n), cached per n.
inline const GaussLegendreRule& gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one point");
  static std::mutex mutex;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussLegendreRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

template <class F>
double gauss_legendre_integrate(F&& f, double a, double b, int n) {
  const auto& r = gauss_legendre(n);
  const double h = 0.5 * (b - a), m = 0.5 * (a + b);
  double s = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(m + h * r.nodes[i]);
  return s * h;
}

/// ∫_a^b f(u) du for f with power-type endpoint singularities (u-a)^alpha
/// and/or (b-u)^alpha, alpha in (-1, 0]. The substitution
/// u = a + (b-a) v^{1/(alpha+1)} removes the singular factor before Gauss-Legendre.
template <class F>
double singular_integrate(F&& f, double a, double b, double alpha, bool left_singular, bool right_singular, int n) {
  if (!(b > a)) return 0.0;
  const double g = 1.0 / (alpha + 1.0);
  auto left = [&](double lo, double hi) {
    const double L = hi - lo;
    return gauss_legendre_integrate([&](double v) { return f(lo + L * std::pow(v, g)) * L * g * std::pow(v, g - 1.0); }, 0.0, 1.0, n);
  };
  auto right = [&](double lo, double hi) {
    const double L = hi - lo;
    return gauss_legendre_integrate([&](double v) { return f(hi - L * std::pow(v, g)) * L * g * std::pow(v, g - 1.0); }, 0.0, 1.0, n);
  };
  if (left_singular && right_singular) {
    const double mid = 0.5 * (a + b);
    return left(a, mid) + right(mid, b);
  }
  if (left_singular) return left(a, b);
  if (right_singular) return right(a, b);
  return gauss_legendre_integrate(f, a, b, n);
}

}  // namespace roughfilter
