#pragma once

// Grid-restricted p-variation, 2D (rho,rho)-variation, and Young integrals.
//
// Every functional here is evaluated over the supplied partition lattice
// only: the supremum runs over subpartitions of the grid, never over the
// continuum. That is what all downstream diagnostics need.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace roughfilter {

/// A vector-valued function sampled on a strictly increasing grid.
struct SampledFunction1D {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> values;

  SampledFunction1D() = default;
  SampledFunction1D(std::vector<double> t, std::vector<Eigen::VectorXd> v) : times(std::move(t)), values(std::move(v)) {
    validate();
  }

  /// Scalar convenience constructor.
  static SampledFunction1D scalar(std::vector<double> t, std::span<const double> v) {
    std::vector<Eigen::VectorXd> vals;
    vals.reserve(v.size());
    for (double x : v) vals.push_back(Eigen::VectorXd::Constant(1, x));
    return SampledFunction1D(std::move(t), std::move(vals));
  }

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return values.empty() ? 0 : static_cast<std::size_t>(values.front().size()); }

  void validate() const {
    if (times.size() != values.size()) throw std::invalid_argument("SampledFunction1D: times/values length mismatch");
    if (!times.empty() && times.front() < 0.0) throw std::invalid_argument("SampledFunction1D: first time must be >= 0");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw std::invalid_argument("SampledFunction1D: times must be strictly increasing");
    }
    for (const auto& v : values) {
      if (v.size() != values.front().size()) throw std::invalid_argument("SampledFunction1D: ragged values");
      if (!v.allFinite()) throw std::invalid_argument("SampledFunction1D: non-finite value");
    }
  }

  /// Linear interpolation at time t (clamped to the grid range).
  Eigen::VectorXd at(double t) const {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
    const double w = (t - times[k]) / (times[k + 1] - times[k]);
    return (1.0 - w) * values[k] + w * values[k + 1];
  }
};

/// A scalar function on a lattice s_grid × u_grid; values(i, j) = f(s_i, u_j).
struct SampledFunction2D {
  std::vector<double> s_grid;
  std::vector<double> u_grid;
  Eigen::MatrixXd values;

  void validate() const {
    for (const auto* g : {&s_grid, &u_grid}) {
      for (std::size_t i = 1; i < g->size(); ++i) {
        if (!((*g)[i] > (*g)[i - 1])) throw std::invalid_argument("SampledFunction2D: grids must be strictly increasing");
      }
    }
    if (values.rows() != static_cast<Eigen::Index>(s_grid.size()) ||
        values.cols() != static_cast<Eigen::Index>(u_grid.size())) {
      throw std::invalid_argument("SampledFunction2D: value matrix does not match grids");
    }
    if (!values.allFinite()) throw std::invalid_argument("SampledFunction2D: non-finite value");
  }

  template <class F>
  static SampledFunction2D from(std::vector<double> s, std::vector<double> u, F&& f) {
    SampledFunction2D r{std::move(s), std::move(u), {}};
    r.values.resize(static_cast<Eigen::Index>(r.s_grid.size()), static_cast<Eigen::Index>(r.u_grid.size()));
    for (std::size_t i = 0; i < r.s_grid.size(); ++i)
      for (std::size_t j = 0; j < r.u_grid.size(); ++j) r.values(i, j) = f(r.s_grid[i], r.u_grid[j]);
    return r;
  }

  /// Rectangular increment f(s_b,u_d) - f(s_a,u_d) - f(s_b,u_c) + f(s_a,u_c) by grid indices.
  double increment(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return values(b, d) - values(a, d) - values(b, c) + values(a, c);
  }
};

/// A rectangle [s0,s1] × [u0,u1] in time coordinates.
struct Rect {
  double s0, s1, u0, u1;
};

namespace detail {

inline std::size_t grid_index(const std::vector<double>& grid, double t, const char* what) {
  const double tol = 1e-12 * std::max(1.0, std::abs(grid.back()));
  auto it = std::lower_bound(grid.begin(), grid.end(), t - tol);
  if (it == grid.end() || std::abs(*it - t) > tol) {
    throw std::invalid_argument(std::string(what) + ": time " + std::to_string(t) + " is not a grid point");
  }
  return static_cast<std::size_t>(it - grid.begin());
}

}  // namespace detail

/// Exact grid p-variation by O(n^2) dynamic programming over subpartitions.
/// `dist(i, j)` is the increment size between grid points i < j.
template <class Dist>
double p_variation_dp(std::size_t n, double p, Dist&& dist) {
  if (p < 1.0) throw std::invalid_argument("p_variation: p must be >= 1");
  if (n < 2) throw std::invalid_argument("p_variation: need at least 2 points");
  std::vector<double> best(n, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    double b = 0.0;
    for (std::size_t i = 0; i < j; ++i) b = std::max(b, best[i] + std::pow(dist(i, j), p));
    best[j] = b;
  }
  return std::pow(best[n - 1], 1.0 / p);
}

/// sup over subpartitions of the grid of (Σ ||f_{t_{k+1}} - f_{t_k}||^p)^{1/p}.
inline double p_variation(const SampledFunction1D& f, double p) {
  if (p < 1.0) throw std::invalid_argument("p_variation: p must be >= 1");
  return p_variation_dp(f.size(), p, [&](std::size_t i, std::size_t j) { return (f.values[j] - f.values[i]).norm(); });
}

/// p-variation^p over the grid sub-interval [t_a, t_b] (indices), i.e. the control ω(t_a, t_b).
inline double p_variation_control(const SampledFunction1D& f, double p, std::size_t a, std::size_t b) {
  if (b <= a) return 0.0;
  std::vector<double> best(b - a + 1, 0.0);
  for (std::size_t j = 1; j <= b - a; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < j; ++i) m = std::max(m, best[i] + std::pow((f.values[a + j] - f.values[a + i]).norm(), p));
    best[j] = m;
  }
  return best.back();
}

struct Rho2DResult {
  double value = 0.0;   ///< (Σ |increment|^rho)^{1/rho} of the best lattice found
  bool lower_bound = true;  ///< true: heuristic search, the true sup may be larger
};

/// Grid-restricted (rho,rho)-variation of a 2D function over `rect`.
///
/// Exact search over grid-like subpartitions is exponential. The search
/// evaluates every dyadic thinning of the lattice and then runs greedy
/// single-point removals/insertions until no move improves the sum.
inline Rho2DResult rho_var_2d(const SampledFunction2D& R, double rho, const Rect& rect) {
  if (rho < 1.0) throw std::invalid_argument("rho_var_2d: rho must be >= 1");
  R.validate();
  if (rect.s1 < rect.s0 || rect.u1 < rect.u0) throw std::invalid_argument("rho_var_2d: malformed rectangle");
  const std::size_t sa = detail::grid_index(R.s_grid, rect.s0, "rho_var_2d");
  const std::size_t sb = detail::grid_index(R.s_grid, rect.s1, "rho_var_2d");
  const std::size_t ua = detail::grid_index(R.u_grid, rect.u0, "rho_var_2d");
  const std::size_t ub = detail::grid_index(R.u_grid, rect.u1, "rho_var_2d");
  if (sa == sb || ua == ub) return {0.0, false};

  auto sum_for = [&](const std::vector<std::size_t>& S, const std::vector<std::size_t>& U) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < S.size(); ++i)
      for (std::size_t j = 0; j + 1 < U.size(); ++j) s += std::pow(std::abs(R.increment(S[i], S[i + 1], U[j], U[j + 1])), rho);
    return s;
  };
  auto thinned = [](std::size_t a, std::size_t b, std::size_t stride) {
    std::vector<std::size_t> v;
    for (std::size_t i = a; i < b; i += stride) v.push_back(i);
    v.push_back(b);
    return v;
  };

  std::vector<std::size_t> bestS{sa, sb}, bestU{ua, ub};
  double best = sum_for(bestS, bestU);
  const std::size_t span = std::max(sb - sa, ub - ua);
  for (std::size_t stride = 1; stride <= span; stride *= 2) {
    auto S = thinned(sa, sb, std::min(stride, sb - sa));
    auto U = thinned(ua, ub, std::min(stride, ub - ua));
    const double v = sum_for(S, U);
    if (v > best) {
      best = v;
      bestS = std::move(S);
      bestU = std::move(U);
    }
  }

  // Greedy local search on the lattice axes; bounded number of sweeps.
  auto improve_axis = [&](std::vector<std::size_t>& axis, std::size_t lo, std::size_t hi, bool is_s) {
    bool changed = false;
    for (std::size_t k = 1; k + 1 < axis.size(); ++k) {
      auto trial = axis;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(k));
      const double v = is_s ? sum_for(trial, bestU) : sum_for(bestS, trial);
      if (v > best * (1.0 + 1e-14)) {
        best = v;
        axis = std::move(trial);
        changed = true;
        --k;
      }
    }
    if (hi - lo <= 64) {
      for (std::size_t g = lo + 1; g < hi; ++g) {
        if (std::binary_search(axis.begin(), axis.end(), g)) continue;
        auto trial = axis;
        trial.insert(std::upper_bound(trial.begin(), trial.end(), g), g);
        const double v = is_s ? sum_for(trial, bestU) : sum_for(bestS, trial);
        if (v > best * (1.0 + 1e-14)) {
          best = v;
          axis = std::move(trial);
          changed = true;
        }
      }
    }
    return changed;
  };
  for (int sweep = 0; sweep < 4; ++sweep) {
    bool c1 = improve_axis(bestS, sa, sb, true);
    bool c2 = improve_axis(bestU, ua, ub, false);
    if (!c1 && !c2) break;
  }
  return {std::pow(best, 1.0 / rho), true};
}

/// Left-point Riemann-Stieltjes sum Σ f(t_k)(g(t_{k+1}) - g(t_k)) on the union grid,
/// with linear interpolation of either function onto the common refinement.
inline double young_integral_1d(const SampledFunction1D& f, const SampledFunction1D& g) {
  if (f.dim() != g.dim()) throw std::invalid_argument("young_integral_1d: incompatible dimensions");
  std::vector<double> grid;
  if (f.times == g.times) {
    grid = f.times;
  } else {
    const double lo = std::max(f.times.front(), g.times.front());
    const double hi = std::min(f.times.back(), g.times.back());
    std::merge(f.times.begin(), f.times.end(), g.times.begin(), g.times.end(), std::back_inserter(grid));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    grid.erase(std::remove_if(grid.begin(), grid.end(), [&](double t) { return t < lo || t > hi; }), grid.end());
  }
  const bool same = f.times == g.times;
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const Eigen::VectorXd fk = same ? f.values[k] : f.at(grid[k]);
    const Eigen::VectorXd dg = same ? Eigen::VectorXd(g.values[k + 1] - g.values[k]) : Eigen::VectorXd(g.at(grid[k + 1]) - g.at(grid[k]));
    s += fk.dot(dg);
  }
  return s;
}

/// Σ f(s_i, u_j) · g(2D increment over cell) on the shared lattice restricted to `rect`.
inline double young_integral_2d(const SampledFunction2D& f, const SampledFunction2D& g, const Rect& rect) {
  f.validate();
  g.validate();
  if (f.s_grid != g.s_grid || f.u_grid != g.u_grid) throw std::invalid_argument("young_integral_2d: lattices differ");
  const std::size_t sa = detail::grid_index(g.s_grid, rect.s0, "young_integral_2d");
  const std::size_t sb = detail::grid_index(g.s_grid, rect.s1, "young_integral_2d");
  const std::size_t ua = detail::grid_index(g.u_grid, rect.u0, "young_integral_2d");
  const std::size_t ub = detail::grid_index(g.u_grid, rect.u1, "young_integral_2d");
  double s = 0.0;
  for (std::size_t i = sa; i < sb; ++i)
    for (std::size_t j = ua; j < ub; ++j) s += f.values(i, j) * g.increment(i, i + 1, j, j + 1);
  return s;
}

}  // namespace roughfilter
