#pragma once

// One-dimensional unnormalized filter density on a finite-difference grid:
// Crank–Nicolson diffusion in the covariance clock R(s,s), exact exponential
// reaction against the observation's Brownian motion.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "density.hpp"
#include "filtering.hpp"
#include "parallel.hpp"

namespace roughfilter {

class ZakaiFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ZakaiGrid {
  std::vector<double> x_grid;
  std::vector<double> t_grid;
  Eigen::MatrixXd rho;  ///< m × n, column k at t_grid[k]
  double kappa = 0.5;
  std::size_t clipped_negatives = 0;
  double min_relative = 0.0;  ///< min over time of min ρ / max ρ before clipping
  double max_boundary_mass = 0.0;
  std::size_t diffusion_substeps = 0;
  std::vector<double> reaction_mass_defect;  ///< per step |Δmass − (Σbρ ΔW − ½Σb²ρ Δt)dx|
  std::vector<double> reaction_second_order;  ///< per step Taylor remainder bound Σ ρ ½a²e^{|a|} dx, a = bΔW − ½b²Δt
  std::vector<std::string> warnings;

  std::size_t time_index(double t) const { return detail::grid_index(t_grid, t, "ZakaiGrid"); }
  std::vector<double> slice(std::size_t k) const {
    std::vector<double> v(x_grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    return v;
  }
};

inline std::vector<double> uniform_space_grid(double lo, double hi, std::size_t m) {
  if (m < 5) throw std::invalid_argument("space grid needs at least 5 points");
  if (!(hi > lo)) throw std::invalid_argument("space grid: empty interval");
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
  return x;
}

namespace detail {

inline double grid_step(const std::vector<double>& x) {
  if (x.size() < 5) throw std::invalid_argument("Zakai: space grid needs at least 5 points");
  const double dx = x[1] - x[0];
  for (std::size_t i = 1; i < x.size(); ++i)
    if (std::abs(x[i] - x[i - 1] - dx) > 1e-9 * std::max(1.0, std::abs(dx))) throw std::invalid_argument("Zakai: space grid must be uniform");
  return dx;
}

/// Tridiagonal stencil of A*: lower, diagonal, upper coefficients per node.
struct Stencil {
  std::vector<double> lo, di, up;
};

inline Stencil a_star_stencil(std::span<const double> s2, std::span<const double> ssp, double dx) {
  const std::size_t m = s2.size();
  Stencil st{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  const double i2 = 1.0 / (dx * dx), i1 = 0.5 / dx;
  for (std::size_t i = 0; i < m; ++i) {
    st.di[i] = -2.0 * s2[i] * i2;
    if (i > 0) st.lo[i] = s2[i - 1] * i2 + ssp[i - 1] * i1;
    if (i + 1 < m) st.up[i] = s2[i + 1] * i2 - ssp[i + 1] * i1;
  }
  return st;
}

inline std::vector<double> apply_stencil(const Stencil& st, std::span<const double> v) {
  const std::size_t m = v.size();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = st.di[i] * v[i];
    if (i > 0) out[i] += st.lo[i] * v[i - 1];
    if (i + 1 < m) out[i] += st.up[i] * v[i + 1];
  }
  return out;
}

/// Solves (I − c·A) u = rhs with the Thomas algorithm.
inline std::vector<double> implicit_solve(const Stencil& st, double c, std::vector<double> rhs) {
  const std::size_t m = rhs.size();
  std::vector<double> cp(m), dp(m);
  double b0 = 1.0 - c * st.di[0];
  cp[0] = -c * st.up[0] / b0;
  dp[0] = rhs[0] / b0;
  for (std::size_t i = 1; i < m; ++i) {
    const double a = -c * st.lo[i], b = 1.0 - c * st.di[i], up = -c * st.up[i];
    const double den = b - a * cp[i - 1];
    cp[i] = up / den;
    dp[i] = (rhs[i] - a * dp[i - 1]) / den;
  }
  for (std::size_t i = m - 1; i-- > 0;) dp[i] -= cp[i] * dp[i + 1];
  return dp;
}

}  // namespace detail

/// A*ρ = ∂_xx(ρσ²) − ∂_x(ρσσ′) by central differences with zero ghost values.
inline std::vector<double> apply_a_star(std::span<const double> rho, const std::function<double(double)>& sigma,
                                        const std::function<double(double)>& dsigma, const std::vector<double>& x_grid) {
  if (rho.size() != x_grid.size()) throw std::invalid_argument("apply_a_star: ρ and grid differ in length");
  const double dx = detail::grid_step(x_grid);
  std::vector<double> s2(x_grid.size()), ssp(x_grid.size());
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    const double s = sigma(x_grid[i]);
    s2[i] = s * s;
    ssp[i] = s * dsigma(x_grid[i]);
  }
  return detail::apply_stencil(detail::a_star_stencil(s2, ssp, dx), rho);
}

struct ZakaiOptions {
  double kappa = 0.5;
  std::size_t time_refine = 1;   ///< sub-intervals per observation interval (linear interpolation of W)
  std::size_t coarsen = 1;       ///< use every coarsen-th observation point as the driver partition
  double cfl = 0.4;              ///< bound on κ ΔR max σ² / Δx² per diffusion sub-step
  double mass_growth_limit = 10.0;
};

namespace detail {

inline void check_zakai_scenario(const Scenario& s) {
  if (s.d_X != 1 || s.d_Y != 1 || s.d_B != 1) throw std::invalid_argument("Zakai: one-dimensional scenario required");
  if (s.sigma.y_coef != 0.0) throw std::invalid_argument("Zakai: σ must not depend on the observation");
  if (s.x0.kind != InitialLaw::Kind::Gaussian) throw std::invalid_argument("Zakai: Gaussian initial law required");
}

}  // namespace detail

/// Bound on |σ| over the region the prior can reach.
inline double sigma_bound(const Scenario& s) {
  const FieldSpec& f = s.sigma;
  if (f.family == FieldFamily::Linear) {
    const double reach = std::abs(s.x0.mean) + 4.0 * s.x0.sd + 1.0;
    return std::abs(f.offset) + std::abs(f.scale) * std::abs(f.x_coef) * reach;
  }
  return std::abs(f.offset) + std::abs(f.scale);
}

/// Space grid centred on the prior mean, ±8 prior push-forward standard deviations.
inline std::vector<double> auto_space_grid(const Scenario& s, std::size_t m) {
  detail::check_zakai_scenario(s);
  const double sb = sigma_bound(s);
  const double sd = std::sqrt(s.x0.sd * s.x0.sd + sb * sb * s.kernel.covariance(s.T, s.T));
  return uniform_space_grid(s.x0.mean - 8.0 * sd, s.x0.mean + 8.0 * sd, m);
}

inline ZakaiGrid solve_zakai(const Scenario& s, const ObservedPath& obs, const std::vector<double>& x_grid, const ZakaiOptions& opt = {}) {
  detail::check_zakai_scenario(s);
  if (opt.kappa <= 0.0) throw std::invalid_argument("Zakai: κ must be positive");
  if (opt.time_refine < 1 || opt.coarsen < 1) throw std::invalid_argument("Zakai: refinement factors must be positive");
  if (obs.Y.rows() != 1 || obs.W.rows() != 1 || obs.Y.cols() != static_cast<Eigen::Index>(obs.grid.size()))
    throw std::invalid_argument("Zakai: observed path must be one-dimensional on its grid");
  if ((obs.grid.size() - 1) % opt.coarsen != 0) throw std::invalid_argument("Zakai: coarsen must divide the number of observation intervals");
  const double dx = detail::grid_step(x_grid);
  const std::size_t m = x_grid.size();

  ZakaiGrid out;
  out.x_grid = x_grid;
  out.kappa = opt.kappa;
  std::vector<std::size_t> obs_idx;
  for (std::size_t k = 0; k < obs.grid.size(); k += opt.coarsen) {
    obs_idx.push_back(k);
    out.t_grid.push_back(obs.grid[k]);
  }
  const std::size_t n = out.t_grid.size();
  for (std::size_t k = 1; k < n; ++k) {
    if (s.kernel.covariance(out.t_grid[k], out.t_grid[k]) < s.kernel.covariance(out.t_grid[k - 1], out.t_grid[k - 1]))
      throw std::invalid_argument("Zakai: R(s,s) is not nondecreasing on the partition");
  }

  const auto sigma = s.sigma_field();
  std::vector<double> s2(m), ssp(m);
  double s2max = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    Eigen::Vector2d z(x_grid[i], 0.0);
    const double v = sigma.evaluate(z)(0, 0);
    const double dv = sigma.jacobian(z)[0](0, 0);
    s2[i] = v * v;
    ssp[i] = v * dv;
    s2max = std::max(s2max, s2[i]);
  }
  const auto stencil = detail::a_star_stencil(s2, ssp, dx);

  out.rho.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  std::vector<double> rho(m);
  for (std::size_t i = 0; i < m; ++i) rho[i] = s.x0.density(x_grid[i]);
  rho.front() = rho.back() = 0.0;
  for (std::size_t i = 0; i < m; ++i) out.rho(static_cast<Eigen::Index>(i), 0) = rho[i];

  auto mass = [&](const std::vector<double>& v) { return trapezoid(x_grid, v); };
  std::vector<double> bx(m);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double t0 = out.t_grid[k], t1 = out.t_grid[k + 1];
    const double y0 = obs.Y(0, static_cast<Eigen::Index>(obs_idx[k])), y1 = obs.Y(0, static_cast<Eigen::Index>(obs_idx[k + 1]));
    const double dW = (obs.W(0, static_cast<Eigen::Index>(obs_idx[k + 1])) - obs.W(0, static_cast<Eigen::Index>(obs_idx[k]))) / static_cast<double>(opt.time_refine);
    const double before = mass(rho);
    for (std::size_t r = 0; r < opt.time_refine; ++r) {
      const double ta = t0 + (t1 - t0) * static_cast<double>(r) / static_cast<double>(opt.time_refine);
      const double tb = t0 + (t1 - t0) * static_cast<double>(r + 1) / static_cast<double>(opt.time_refine);
      // diffusion in the clock κ R(s,s)
      const double dR = opt.kappa * (s.kernel.covariance(tb, tb) - s.kernel.covariance(ta, ta));
      const double ratio = dR * s2max / (dx * dx);
      const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(ratio / opt.cfl)));
      out.diffusion_substeps += sub;
      const double c = dR / static_cast<double>(sub);
      for (std::size_t q = 0; q < sub; ++q) {
        auto a = detail::apply_stencil(stencil, rho);
        for (std::size_t i = 0; i < m; ++i) a[i] = rho[i] + 0.5 * c * a[i];
        rho = detail::implicit_solve(stencil, 0.5 * c, std::move(a));
      }
      // reaction against the interpolated W, b frozen at the left observation value
      const double y = y0 + (y1 - y0) * static_cast<double>(r) / static_cast<double>(opt.time_refine);
      const double dt = tb - ta;
      std::vector<double> lin(m), second(m), pre = rho;
      for (std::size_t i = 0; i < m; ++i) {
        bx[i] = s.b_value(Eigen::Vector2d(x_grid[i], y))(0);
        const double a = bx[i] * dW - 0.5 * bx[i] * bx[i] * dt;
        rho[i] *= std::exp(a);
        lin[i] = pre[i] * a;
        second[i] = pre[i] * 0.5 * a * a * std::exp(std::abs(a));
      }
      const double dm = mass(rho) - mass(pre);
      out.reaction_mass_defect.push_back(std::abs(dm - mass(lin)));
      out.reaction_second_order.push_back(mass(second));
    }
    double mx = 0.0, mn = 0.0;
    for (double& v : rho) {
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    if (mx > 0.0) out.min_relative = std::min(out.min_relative, mn / mx);
    for (double& v : rho)
      if (v < 0.0) {
        v = 0.0;
        ++out.clipped_negatives;
      }
    const double after = mass(rho);
    if (!std::isfinite(after) || (before > 0.0 && after > opt.mass_growth_limit * before))
      throw ZakaiFailure("Zakai: mass grew from " + std::to_string(before) + " to " + std::to_string(after) + " in the step ending at t = " + std::to_string(t1));
    const double edge = (rho[0] + rho[1] + rho[m - 2] + rho[m - 1]) * dx;
    out.max_boundary_mass = std::max(out.max_boundary_mass, edge);
    for (std::size_t i = 0; i < m; ++i) out.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + 1)) = rho[i];
  }
  if (out.max_boundary_mass > 1e-6) out.warnings.push_back("boundary mass " + std::to_string(out.max_boundary_mass) + " exceeds 1e-6");
  if (out.clipped_negatives > 0) out.warnings.push_back(std::to_string(out.clipped_negatives) + " negative values clipped");
  return out;
}

inline double zakai_mass(const ZakaiGrid& g, double t) {
  return trapezoid(g.x_grid, g.slice(g.time_index(t)));
}

/// Posterior moment ∫xρ / ∫ρ at time t.
inline double zakai_mean(const ZakaiGrid& g, double t) {
  auto v = g.slice(g.time_index(t));
  std::vector<double> xv(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) xv[i] = g.x_grid[i] * v[i];
  return trapezoid(g.x_grid, xv) / trapezoid(g.x_grid, v);
}

inline double zakai_variance(const ZakaiGrid& g, double t) {
  const double mu = zakai_mean(g, t);
  auto v = g.slice(g.time_index(t));
  std::vector<double> q(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) q[i] = (g.x_grid[i] - mu) * (g.x_grid[i] - mu) * v[i];
  return trapezoid(g.x_grid, q) / trapezoid(g.x_grid, v);
}

struct ConvergenceRow {
  std::size_t level = 0;
  std::size_t intervals = 0;
  double sup_distance = 0.0;  ///< against the previous (coarser) level; 0 for the first
};

/// Solutions on dyadically refined driver partitions (coarsest uses every
/// 2^levels-th observation point); sup-norm distances at the coarsest partition's times.
inline std::vector<ConvergenceRow> rough_viscosity_convergence(const Scenario& s, const ObservedPath& obs, const std::vector<double>& x_grid,
                                                               double kappa, std::size_t levels, std::size_t time_refine = 1) {
  if (levels < 1 || levels > 5) throw std::invalid_argument("rough_viscosity_convergence: 1 to 5 refinement levels");
  const std::size_t N = obs.grid.size() - 1;
  const std::size_t top = std::size_t{1} << levels;
  if (N % top != 0) throw std::invalid_argument("rough_viscosity_convergence: observation grid too coarse for the requested levels");
  std::vector<ZakaiGrid> sols;
  std::vector<ConvergenceRow> rows;
  for (std::size_t l = 0; l <= levels; ++l) {
    ZakaiOptions o;
    o.kappa = kappa;
    o.coarsen = top >> l;
    o.time_refine = time_refine << (levels - l);  // same PDE time step at every level
    sols.push_back(solve_zakai(s, obs, x_grid, o));
    ConvergenceRow row;
    row.level = l;
    row.intervals = N / o.coarsen;
    if (l > 0) {
      const auto& a = sols[l - 1];
      const auto& b = sols[l];
      double d = 0.0;
      for (std::size_t k = 0; k < a.t_grid.size(); ++k) {
        const std::size_t kb = b.time_index(a.t_grid[k]);
        d = std::max(d, (a.rho.col(static_cast<Eigen::Index>(k)) - b.rho.col(static_cast<Eigen::Index>(kb))).cwiseAbs().maxCoeff());
      }
      row.sup_distance = d;
    }
    rows.push_back(row);
  }
  return rows;
}

struct ParticleComparison {
  std::vector<double> t;
  std::vector<double> l1;
  double l1_distance = 0.0;  ///< at the last time
};

/// L1 distance between the normalized PDE density and the normalized weighted
/// KDE of the robust-filter samples at each time in t_eval.
inline ParticleComparison compare_zakai_particle(const Scenario& s, const ObservedPath& obs, std::size_t n_mc, const std::vector<double>& x_grid,
                                                 double kappa, std::uint64_t seed, const std::vector<double>& t_eval, int threads = 0) {
  ZakaiOptions o;
  o.kappa = kappa;
  auto g = solve_zakai(s, obs, x_grid, o);
  FilterOptions fo;
  fo.threads = threads;
  auto fs = filter_samples(s, obs, n_mc, seed, t_eval, fo);
  ParticleComparison out;
  for (std::size_t i = 0; i < t_eval.size(); ++i) {
    std::vector<double> kde;
    if (t_eval[i] == 0.0) {
      std::vector<double> x(n_mc), w(n_mc, 1.0 / static_cast<double>(n_mc));
      for (std::size_t j = 0; j < n_mc; ++j) x[j] = fs.X[i](static_cast<Eigen::Index>(j), 0);
      kde = density_kde(x, w, silverman_bandwidth(x, w), x_grid);
    } else {
      kde = filter_density(fs, i, 0, x_grid);
    }
    const auto pde = g.slice(g.time_index(t_eval[i]));
    out.t.push_back(t_eval[i]);
    out.l1.push_back(l1_distance_normalized(x_grid, pde, kde));
  }
  out.l1_distance = out.l1.back();
  return out;
}

struct KappaRow {
  std::size_t draw = 0;
  double kappa = 0.0;
  double zakai_mean = 0.0;
  double kalman_mean = 0.0;
  double rel_error = 0.0;
};

struct KappaCalibration {
  double kappa = 0.0;
  bool reproducible = true;  ///< every draw prefers the same κ
  std::vector<KappaRow> rows;
};

/// Compares κ ∈ {1, ½} against the Kalman–Bucy mean at T on independent draws of
/// the linear-Gaussian H = 1/2 scenario (σ constant, b = βx, Gaussian x0).
inline KappaCalibration calibrate_kappa(const Scenario& s, std::size_t draws, std::uint64_t seed, std::size_t m = 256, int threads = 0) {
  detail::check_zakai_scenario(s);
  if (!s.kernel.is_brownian()) throw std::invalid_argument("calibrate_kappa: requires the H = 1/2 kernel");
  if (s.sigma.family != FieldFamily::Constant || s.b.family != FieldFamily::Linear || s.b.offset != 0.0 || s.b.y_coef != 0.0)
    throw std::invalid_argument("calibrate_kappa: requires constant σ and b(x) = βx");
  const double sig = s.sigma.offset + s.sigma.scale, beta = s.b.scale * s.b.x_coef;
  TruthSimulator sim(s);
  const auto xg = auto_space_grid(s, m);
  const std::vector<double> kappas{1.0, 0.5};
  KappaCalibration cal;
  cal.rows.resize(draws * kappas.size());
  parallel_for(
      draws,
      [&](std::size_t d) {
        auto p = sim.simulate(derive_seed(seed, d));
        auto kb = kalman_bucy(p.grid, p.Y.row(0), s.x0.mean, s.x0.sd * s.x0.sd, sig, beta);
        for (std::size_t j = 0; j < kappas.size(); ++j) {
          ZakaiOptions o;
          o.kappa = kappas[j];
          auto g = solve_zakai(s, observed(p), xg, o);
          KappaRow r;
          r.draw = d;
          r.kappa = kappas[j];
          r.zakai_mean = zakai_mean(g, s.T);
          r.kalman_mean = kb.mean.back();
          r.rel_error = std::abs(r.zakai_mean - r.kalman_mean) / std::max(std::abs(r.kalman_mean), 1e-12);
          cal.rows[d * kappas.size() + j] = r;
        }
      },
      threads);
  std::vector<double> total(kappas.size(), 0.0);
  std::vector<std::size_t> wins(kappas.size(), 0);
  for (std::size_t d = 0; d < draws; ++d) {
    std::size_t best = 0;
    for (std::size_t j = 0; j < kappas.size(); ++j) {
      total[j] += cal.rows[d * kappas.size() + j].rel_error;
      if (cal.rows[d * kappas.size() + j].rel_error < cal.rows[d * kappas.size() + best].rel_error) best = j;
    }
    ++wins[best];
  }
  const std::size_t best = static_cast<std::size_t>(std::min_element(total.begin(), total.end()) - total.begin());
  cal.kappa = kappas[best];
  cal.reproducible = wins[best] == draws;
  return cal;
}

}  // namespace roughfilter
