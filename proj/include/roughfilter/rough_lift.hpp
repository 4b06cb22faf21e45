#pragma once

// Level-2/3 lifts of sampled paths: the piecewise-linear (geometric) lift and
// the hybrid lift of (B, Y, W) whose (Y^j, W^j) cross entries are Itô sums.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "parallel.hpp"
#include "tensor_algebra.hpp"
#include "variation.hpp"
#include "volterra.hpp"

namespace roughfilter {

enum class LiftMode { Geometric, ItoCross };
enum class BlockLabel { Volterra, Observation, Brownian };

/// p = 1/H + 0.1 clamped into (2, 4).
inline double default_p(double hurst) { return std::clamp(1.0 / hurst + 0.1, 2.0 + 1e-9, 4.0 - 1e-9); }
inline int level_for_p(double p) { return p < 3.0 ? 2 : 3; }

class LiftedPath {
 public:
  LiftedPath() = default;
  LiftedPath(std::vector<double> grid, std::vector<GroupIncrement> increments, LiftMode mode, std::vector<BlockLabel> labels)
      : grid_(std::move(grid)), inc_(std::move(increments)), mode_(mode), labels_(std::move(labels)) {
    if (grid_.size() < 2) throw std::invalid_argument("LiftedPath: need at least two grid points");
    if (inc_.size() + 1 != grid_.size()) throw std::invalid_argument("LiftedPath: one increment per grid interval required");
    for (std::size_t i = 1; i < grid_.size(); ++i)
      if (!(grid_[i] > grid_[i - 1])) throw std::invalid_argument("LiftedPath: grid must be strictly increasing");
    const std::size_t d = inc_.front().dim();
    const int n = inc_.front().level();
    for (const auto& g : inc_)
      if (g.dim() != d || g.level() != n) throw std::invalid_argument("LiftedPath: ragged increments");
    if (labels_.empty()) labels_.assign(d, BlockLabel::Volterra);
    if (labels_.size() != d) throw std::invalid_argument("LiftedPath: one block label per coordinate required");
    prefix_.reserve(grid_.size());
    prefix_.emplace_back(d, n);
    for (const auto& g : inc_) prefix_.push_back(tensor_mul(prefix_.back(), g));
  }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<GroupIncrement>& increments() const { return inc_; }
  /// Mutable access for fault-injection tests; stored composites are not rebuilt.
  std::vector<GroupIncrement>& mutable_increments() { return inc_; }
  LiftMode mode() const { return mode_; }
  const std::vector<BlockLabel>& block_labels() const { return labels_; }
  std::size_t dim() const { return inc_.front().dim(); }
  int level() const { return inc_.front().level(); }
  std::size_t intervals() const { return inc_.size(); }

  /// Stored composite over [t_0, t_k].
  const GroupIncrement& from_start(std::size_t k) const { return prefix_.at(k); }

  /// Chain product of increments over [t_a, t_b].
  GroupIncrement composite(std::size_t a, std::size_t b) const {
    if (a > b || b >= grid_.size()) throw std::out_of_range("LiftedPath::composite: bad index range");
    GroupIncrement g(dim(), level());
    for (std::size_t k = a; k < b; ++k) g = tensor_mul(g, inc_[k]);
    return g;
  }

  /// Level-1 path (cumulative increments from 0), D × n.
  Eigen::MatrixXd level1_path() const {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(grid_.size()));
    for (std::size_t k = 0; k < inc_.size(); ++k)
      for (std::size_t i = 0; i < dim(); ++i)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + 1)) = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) + inc_[k].l1(i);
    return x;
  }

  std::size_t grid_index(double t) const { return detail::grid_index(grid_, t, "LiftedPath"); }

 private:
  std::vector<double> grid_;
  std::vector<GroupIncrement> inc_;
  std::vector<GroupIncrement> prefix_;
  LiftMode mode_ = LiftMode::Geometric;
  std::vector<BlockLabel> labels_;
};

/// Piecewise-linear lift: each interval carries exp_segment of the path increment.
inline LiftedPath lift_segmentwise(const SampledFunction1D& path, int level) {
  path.validate();
  if (path.size() < 2) throw std::invalid_argument("lift_segmentwise: need at least two points");
  std::vector<GroupIncrement> inc;
  inc.reserve(path.size() - 1);
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    Eigen::VectorXd d = path.values[k + 1] - path.values[k];
    inc.push_back(exp_segment(std::span<const double>(d.data(), static_cast<std::size_t>(d.size())), level));
  }
  return LiftedPath(path.times, std::move(inc), LiftMode::Geometric, {});
}

/// Columns of X (D × n) as a SampledFunction1D.
inline SampledFunction1D as_sampled(const std::vector<double>& grid, const Eigen::MatrixXd& X) {
  std::vector<Eigen::VectorXd> v;
  v.reserve(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index k = 0; k < X.cols(); ++k) v.emplace_back(X.col(k));
  return SampledFunction1D(grid, std::move(v));
}

/// Lift on a coarse grid built from a path sampled `refine` times finer:
/// each coarse increment is the Chen product of the sub-step elements
/// exp(Δ_m + A_m). For every pair (a, b) in `ito_pairs`, A_m puts -Δ^aΔ^b/2 at
/// (a, b) and +Δ^aΔ^b/2 at (b, a), so the sub-step carries zero (a, b) area and
/// the full product Δ^aΔ^b at (b, a). The composite (a, b) entry is then the
/// left-point sum Σ X^a_{s,u_m} X^b_{u_m,u_{m+1}}, its partner is forced by
/// geometricity, and the result is exactly group-like.
inline LiftedPath lift_refined(const std::vector<double>& fine_grid, const Eigen::MatrixXd& X, std::size_t refine, int level,
                               const std::vector<std::pair<std::size_t, std::size_t>>& ito_pairs,
                               std::vector<BlockLabel> labels = {}) {
  if (refine < 1) throw std::invalid_argument("lift_refined: refine must be positive");
  if (X.cols() != static_cast<Eigen::Index>(fine_grid.size())) throw std::invalid_argument("lift_refined: grid/value mismatch");
  if ((fine_grid.size() - 1) % refine != 0) throw std::invalid_argument("lift_refined: fine grid not a refinement");
  if (!X.allFinite()) throw std::invalid_argument("lift_refined: non-finite path value");
  const std::size_t D = static_cast<std::size_t>(X.rows());
  for (auto [a, b] : ito_pairs)
    if (a >= D || b >= D || a == b) throw std::invalid_argument("lift_refined: bad Itô pair");
  const std::size_t n_out = (fine_grid.size() - 1) / refine;
  std::vector<double> grid(n_out + 1);
  for (std::size_t k = 0; k <= n_out; ++k) grid[k] = fine_grid[k * refine];

  std::vector<GroupIncrement> inc;
  inc.reserve(n_out);
  std::vector<double> dx(D), area(D * D, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    GroupIncrement g(D, level);
    for (std::size_t m = 0; m < refine; ++m) {
      const auto c = static_cast<Eigen::Index>(k * refine + m);
      for (std::size_t i = 0; i < D; ++i) dx[i] = X(static_cast<Eigen::Index>(i), c + 1) - X(static_cast<Eigen::Index>(i), c);
      std::fill(area.begin(), area.end(), 0.0);
      for (auto [a, b] : ito_pairs) {
        const double q = 0.5 * dx[a] * dx[b];
        area[a * D + b] -= q;
        area[b * D + a] += q;
      }
      GroupIncrement step = exp_lie(dx, area, level);
      g = refine == 1 ? step : tensor_mul(g, step);
    }
    inc.push_back(std::move(g));
  }
  return LiftedPath(std::move(grid), std::move(inc), ito_pairs.empty() ? LiftMode::Geometric : LiftMode::ItoCross,
                    std::move(labels));
}

/// Hybrid lift of (B, Y, W): coordinates ordered B^1..B^{d_B}, Y^1..Y^{d_Y}, W^1..W^{d_Y}.
/// Inputs are sampled on the fine grid; the lift lives on every `inner_refine`-th point.
inline LiftedPath lift_joint_hybrid(const std::vector<double>& fine_grid, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Y,
                                    const Eigen::MatrixXd& W, int level, std::size_t inner_refine) {
  if (W.rows() != Y.rows() || W.rows() == 0) throw std::invalid_argument("lift_joint_hybrid: missing W block for the observations");
  if (B.cols() != Y.cols() || W.cols() != Y.cols()) throw std::invalid_argument("lift_joint_hybrid: block lengths differ");
  const auto dB = static_cast<std::size_t>(B.rows()), dY = static_cast<std::size_t>(Y.rows());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(dB + 2 * dY), Y.cols());
  if (dB > 0) X.topRows(static_cast<Eigen::Index>(dB)) = B;
  X.middleRows(static_cast<Eigen::Index>(dB), static_cast<Eigen::Index>(dY)) = Y;
  X.bottomRows(static_cast<Eigen::Index>(dY)) = W;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t j = 0; j < dY; ++j) pairs.emplace_back(dB + j, dB + dY + j);
  std::vector<BlockLabel> labels(dB, BlockLabel::Volterra);
  labels.insert(labels.end(), dY, BlockLabel::Observation);
  labels.insert(labels.end(), dY, BlockLabel::Brownian);
  return lift_refined(fine_grid, X, inner_refine, level, pairs, std::move(labels));
}

/// Hybrid lift from a joint sample: rows of sample.B listed in `obs_block` are the
/// observation block Y, paired with the same rows of sample.W; remaining rows form B.
inline LiftedPath lift_joint_hybrid(const JointGaussianSample& sample, const std::vector<std::size_t>& obs_block, int level,
                                    std::size_t inner_refine) {
  const auto nB = static_cast<std::size_t>(sample.B.rows());
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < nB; ++i)
    if (std::find(obs_block.begin(), obs_block.end(), i) == obs_block.end()) rest.push_back(i);
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(obs_block.size()), sample.B.cols());
  Eigen::MatrixXd W(static_cast<Eigen::Index>(obs_block.size()), sample.B.cols());
  for (std::size_t j = 0; j < obs_block.size(); ++j) {
    const std::size_t r = obs_block[j];
    if (r >= nB) throw std::invalid_argument("lift_joint_hybrid: observation index out of range");
    if (r >= static_cast<std::size_t>(sample.W.rows())) throw std::invalid_argument("lift_joint_hybrid: missing W block for observation " + std::to_string(r));
    Y.row(static_cast<Eigen::Index>(j)) = sample.B.row(static_cast<Eigen::Index>(r));
    W.row(static_cast<Eigen::Index>(j)) = sample.W.row(static_cast<Eigen::Index>(r));
  }
  Eigen::MatrixXd B(static_cast<Eigen::Index>(rest.size()), sample.B.cols());
  for (std::size_t j = 0; j < rest.size(); ++j) B.row(static_cast<Eigen::Index>(j)) = sample.B.row(static_cast<Eigen::Index>(rest[j]));
  return lift_joint_hybrid(sample.grid, B, Y, W, level, inner_refine);
}

/// Chen residual: every stored composite against its one-step extension, plus
/// `n_random` random triples s < t < u comparing X_{s,u} with X_{s,t} ⊗ X_{t,u}.
inline double chen_residual(const LiftedPath& lift, std::size_t n_random = 64, std::uint64_t seed = 1) {
  double worst = 0.0;
  const std::size_t n = lift.intervals();
  for (std::size_t k = 0; k < n; ++k)
    worst = std::max(worst, max_abs_difference(lift.from_start(k + 1), tensor_mul(lift.from_start(k), lift.increments()[k])));
  if (n < 2) return worst;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n);
  for (std::size_t r = 0; r < n_random; ++r) {
    std::size_t idx[3] = {pick(rng), pick(rng), pick(rng)};
    std::sort(idx, idx + 3);
    if (idx[0] == idx[2]) continue;
    const auto direct = tensor_mul(inverse(lift.from_start(idx[0])), lift.from_start(idx[2]));
    const auto chained = tensor_mul(lift.composite(idx[0], idx[1]), lift.composite(idx[1], idx[2]));
    worst = std::max(worst, max_abs_difference(direct, chained) / std::max(1.0, homogeneous_norm(lift.from_start(idx[2]))));
  }
  return worst;
}

/// Homogeneous p-variation^p control of the lift over grid indices [a, b].
inline double lift_pvar_control(const LiftedPath& lift, double p, std::size_t a, std::size_t b) {
  if (b <= a) return 0.0;
  std::vector<double> best(b - a + 1, 0.0);
  for (std::size_t j = a + 1; j <= b; ++j) {
    GroupIncrement g(lift.dim(), lift.level());
    double m = 0.0;
    for (std::size_t i = j; i-- > a;) {
      g = tensor_mul(lift.increments()[i], g);
      m = std::max(m, best[i - a] + std::pow(homogeneous_norm(g), p));
    }
    best[j - a] = m;
  }
  return best.back();
}

inline double lift_p_variation(const LiftedPath& lift, double p) {
  return std::pow(lift_pvar_control(lift, p, 0, lift.intervals()), 1.0 / p);
}

/// Greedy breakpoints: s_0 = 0 and s_{i+1} is the first grid point where the
/// local control ω(s_i, ·) reaches α. Returns the number of s_i (i >= 1) before T,
/// so that α·N <= ω(0, T) by superadditivity.
inline std::size_t greedy_partition_count(const LiftedPath& lift, double alpha, double p) {
  if (!(alpha > 0.0)) throw std::invalid_argument("greedy_partition_count: alpha must be positive");
  const std::size_t n = lift.intervals();
  std::size_t count = 0, s = 0;
  while (s < n) {
    // incremental DP from s
    std::vector<double> best{0.0};
    std::size_t hit = n + 1;
    for (std::size_t j = s + 1; j <= n; ++j) {
      GroupIncrement g(lift.dim(), lift.level());
      double m = 0.0;
      for (std::size_t i = j; i-- > s;) {
        g = tensor_mul(lift.increments()[i], g);
        m = std::max(m, best[i - s] + std::pow(homogeneous_norm(g), p));
      }
      best.push_back(m);
      if (m >= alpha * (1.0 - 1e-12)) {
        hit = j;
        break;
      }
    }
    if (hit >= n) break;
    ++count;
    s = hit;
  }
  return count;
}

/// Homogeneous p-variation distance sup_P (Σ ||X_{s,t}^{-1} ⊗ Y_{s,t}||^p)^{1/p}
/// between two lifts on the same grid.
inline double lift_pvar_distance(const LiftedPath& x, const LiftedPath& y, double p) {
  if (x.grid() != y.grid()) throw std::invalid_argument("lift_pvar_distance: grids differ");
  const std::size_t n = x.intervals();
  std::vector<double> best(n + 1, 0.0);
  for (std::size_t j = 1; j <= n; ++j) {
    GroupIncrement gx(x.dim(), x.level()), gy(y.dim(), y.level());
    double m = 0.0;
    for (std::size_t i = j; i-- > 0;) {
      gx = tensor_mul(x.increments()[i], gx);
      gy = tensor_mul(y.increments()[i], gy);
      m = std::max(m, best[i] + std::pow(homogeneous_distance(gx, gy), p));
    }
    best[j] = m;
  }
  return std::pow(best[n], 1.0 / p);
}

/// Restriction of a lift to a coarser sub-grid taking every `stride`-th point.
inline LiftedPath coarsen(const LiftedPath& lift, std::size_t stride) {
  if (stride < 1 || lift.intervals() % stride != 0) throw std::invalid_argument("coarsen: stride must divide the interval count");
  std::vector<double> grid;
  std::vector<GroupIncrement> inc;
  for (std::size_t k = 0; k <= lift.intervals(); k += stride) grid.push_back(lift.grid()[k]);
  for (std::size_t k = 0; k < lift.intervals(); k += stride) inc.push_back(lift.composite(k, k + stride));
  return LiftedPath(std::move(grid), std::move(inc), lift.mode(), lift.block_labels());
}

struct DyadicLevelRow {
  int level_coarse = 0;  ///< distance between lifts on 2^level and 2^{level+1}
  double mean = 0.0;
  double stderr_ = 0.0;
  double max = 0.0;
};

/// Distances between piecewise-linear lifts on successive dyadic grids, evaluated on the coarser grid.
inline std::vector<DyadicLevelRow> dyadic_distances(const std::vector<Eigen::MatrixXd>& paths, const std::vector<double>& finest_grid,
                                                    int n_min, int n_max, double p, int threads = 0) {
  if (!(n_min < n_max) || n_max > 14) throw std::invalid_argument("dyadic_convergence_study: require n_min < n_max <= 14");
  if (finest_grid.size() != (std::size_t{1} << n_max) + 1) throw std::invalid_argument("dyadic_convergence_study: finest grid must have 2^n_max intervals");
  const int lvl = level_for_p(p);
  const int L = n_max - n_min;
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(L), std::vector<double>(paths.size()));
  parallel_for(
      paths.size(),
      [&](std::size_t i) {
        auto fine = as_sampled(finest_grid, paths[i]);
        for (int l = n_min; l < n_max; ++l) {
          const std::size_t s_fine = std::size_t{1} << (n_max - l - 1);
          std::vector<double> g;
          std::vector<Eigen::VectorXd> v;
          for (std::size_t k = 0; k < fine.size(); k += s_fine) {
            g.push_back(fine.times[k]);
            v.push_back(fine.values[k]);
          }
          LiftedPath lf = lift_segmentwise(SampledFunction1D(g, v), lvl);
          LiftedPath lf_on_coarse = coarsen(lf, 2);
          std::vector<double> gc;
          std::vector<Eigen::VectorXd> vc;
          for (std::size_t k = 0; k < g.size(); k += 2) {
            gc.push_back(g[k]);
            vc.push_back(v[k]);
          }
          LiftedPath lc = lift_segmentwise(SampledFunction1D(gc, vc), lvl);
          dist[static_cast<std::size_t>(l - n_min)][i] = lift_pvar_distance(lc, lf_on_coarse, p);
        }
      },
      threads);
  std::vector<DyadicLevelRow> rows;
  for (int l = 0; l < L; ++l) {
    const auto& d = dist[static_cast<std::size_t>(l)];
    auto ms = mean_stderr(d);
    rows.push_back({n_min + l, ms.mean, ms.stderr_, *std::max_element(d.begin(), d.end())});
  }
  return rows;
}

/// Samples `n_paths` paths of `dims` i.i.d. Volterra components on the 2^n_max grid
/// and reports inter-level distances for levels n_min..n_max.
inline std::vector<DyadicLevelRow> dyadic_convergence_study(const VolterraKernel& k, std::size_t dims, int n_min, int n_max, double p,
                                                            std::size_t n_paths, std::uint64_t seed, int threads = 0) {
  if (!(n_min < n_max) || n_max > 14 || n_min < 0) throw std::invalid_argument("dyadic_convergence_study: require 0 <= n_min < n_max <= 14");
  auto grid = uniform_grid(k.horizon(), std::size_t{1} << n_max);
  const auto method = n_max <= 10 ? SamplingMethod::Cholesky : SamplingMethod::Convolution;
  auto samples = sample_joint(k, grid, dims, 0, n_paths, seed, method, threads);
  std::vector<Eigen::MatrixXd> paths;
  paths.reserve(samples.size());
  for (auto& s : samples) paths.push_back(std::move(s.B));
  return dyadic_distances(paths, grid, n_min, n_max, p, threads);
}

/// CSV rows (t_start, t_end, word, value); words are 1-based digit strings, e.g. "12".
inline void write_lift_csv(std::ostream& os, const LiftedPath& lift) {
  os << "t_start,t_end,word,value\n";
  os << std::setprecision(17);
  const std::size_t d = lift.dim();
  auto letter = [](std::size_t i) { return std::to_string(i + 1); };
  for (std::size_t k = 0; k < lift.intervals(); ++k) {
    const auto& g = lift.increments()[k];
    const double a = lift.grid()[k], b = lift.grid()[k + 1];
    for (std::size_t i = 0; i < d; ++i) os << a << ',' << b << ',' << letter(i) << ',' << g.l1(i) << '\n';
    if (g.level() >= 2)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) os << a << ',' << b << ',' << letter(i) << letter(j) << ',' << g.l2(i, j) << '\n';
    if (g.level() >= 3)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t l = 0; l < d; ++l)
            os << a << ',' << b << ',' << letter(i) << letter(j) << letter(l) << ',' << g.l3(i, j, l) << '\n';
  }
}

}  // namespace roughfilter
