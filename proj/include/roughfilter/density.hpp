#pragma once

// Weighted Gaussian kernel density estimates.

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "parallel.hpp"

namespace roughfilter {

/// Kish effective sample size (Σw)² / Σw².
inline double effective_sample_size(std::span<const double> w) {
  std::vector<double> sq(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) sq[i] = w[i] * w[i];
  const double s = pairwise_sum(w), s2 = pairwise_sum(sq);
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

namespace detail {

inline void check_weights(std::span<const double> x, std::span<const double> w, const char* what) {
  if (x.size() != w.size()) throw std::invalid_argument(std::string(what) + ": samples and weights differ in length");
  if (x.empty()) throw std::invalid_argument(std::string(what) + ": no samples");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": weights must be finite and nonnegative");
    total += v;
  }
  if (total == 0.0) throw std::invalid_argument(std::string(what) + ": all weights are zero");
}

}  // namespace detail

/// Normal-reference bandwidth 1.06 · sd · n_eff^{-1/5} with weighted sd and Kish n_eff.
inline double silverman_bandwidth(std::span<const double> x, std::span<const double> w) {
  detail::check_weights(x, w, "silverman_bandwidth");
  const double W = pairwise_sum(w);
  std::vector<double> wx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) wx[i] = w[i] * x[i];
  const double mean = pairwise_sum(wx) / W;
  for (std::size_t i = 0; i < x.size(); ++i) wx[i] = w[i] * (x[i] - mean) * (x[i] - mean);
  const double sd = std::sqrt(pairwise_sum(wx) / W);
  const double neff = effective_sample_size(w);
  if (!(sd > 0.0)) throw std::invalid_argument("silverman_bandwidth: degenerate sample spread");
  return 1.06 * sd * std::pow(neff, -0.2);
}

/// Σ_i w_i N(x; x_i, h²) on x_grid. Total mass is Σ w_i up to domain truncation.
inline std::vector<double> density_kde(std::span<const double> x, std::span<const double> w, double bandwidth,
                                       std::span<const double> x_grid) {
  detail::check_weights(x, w, "density_kde");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("density_kde: bandwidth must be positive");
  const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(x_grid.size());
  std::vector<double> terms(x.size());
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = (x_grid[g] - x[i]) / bandwidth;
      terms[i] = w[i] * std::exp(-0.5 * u * u);
    }
    out[g] = norm * pairwise_sum(terms);
  }
  return out;
}

/// Trapezoid rule on a (possibly nonuniform) grid.
inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("trapezoid: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return s;
}

/// ∫|f/∫f − g/∫g| dx by the trapezoid rule.
inline double l1_distance_normalized(std::span<const double> x, std::span<const double> f, std::span<const double> g) {
  const double mf = trapezoid(x, f), mg = trapezoid(x, g);
  if (!(mf > 0.0) || !(mg > 0.0)) throw std::invalid_argument("l1_distance_normalized: nonpositive mass");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = std::abs(f[i] / mf - g[i] / mg);
  return trapezoid(x, d);
}

}  // namespace roughfilter
