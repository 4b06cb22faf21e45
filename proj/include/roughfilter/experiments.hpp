#pragma once

// Monte Carlo studies shared by the command-line self test and the acceptance suite.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "filtering.hpp"
#include "zakai.hpp"

namespace roughfilter {

struct Check {
  std::string suite;
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = false;
  std::string detail;
};

inline Check check_le(std::string suite, std::string name, double value, double bound, std::string detail = {}) {
  return {std::move(suite), std::move(name), value, bound, std::isfinite(value) && value <= bound, std::move(detail)};
}

inline Check check_true(std::string suite, std::string name, bool ok, std::string detail = {}) {
  return {std::move(suite), std::move(name), ok ? 1.0 : 0.0, 1.0, ok, std::move(detail)};
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return !v.empty();
}

/// Least-squares slope of log(err) against log(mesh).
inline double loglog_slope(const std::vector<double>& mesh, const std::vector<double>& err) {
  if (mesh.size() != err.size() || mesh.size() < 2) throw std::invalid_argument("loglog_slope: need at least two matching points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(mesh.size());
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const double x = std::log(mesh[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline std::string join_values(const std::vector<double>& v) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
  return os.str();
}

// ---------------------------------------------------------------- scenarios

inline FieldSpec constant_spec(double v) {
  FieldSpec f;
  f.family = FieldFamily::Constant;
  f.offset = v;
  f.scale = 0.0;
  return f;
}

inline FieldSpec linear_spec(double slope) {
  FieldSpec f;
  f.family = FieldFamily::Linear;
  f.scale = slope;
  return f;
}

/// dX = σ dB, dY = βX dt + dW, X_0 ~ N(m0, s0²), Brownian kernel.
inline Scenario linear_gaussian_scenario(double sigma = 0.5, double beta = 1.0, double m0 = 2.0, double s0 = 0.5, std::size_t grid_n = 32,
                                         std::size_t inner = 8) {
  Scenario s;
  s.sigma = constant_spec(sigma);
  s.b = linear_spec(beta);
  s.x0.kind = InitialLaw::Kind::Gaussian;
  s.x0.mean = m0;
  s.x0.sd = s0;
  s.grid_n = grid_n;
  s.inner_refine = inner;
  s.phi = TestFunction::coordinate(0);
  return s;
}

/// Nonlinear fractional scenario: σ = 0.6 + 0.2 sin(x + y/2), b = 0.8 tanh(x).
inline Scenario rough_nonlinear_scenario(double H = 0.4, std::size_t grid_n = 16, std::size_t inner = 8) {
  Scenario s;
  s.kernel = VolterraKernel(KernelFamily::MandelbrotVanNess, H);
  s.sigma.family = FieldFamily::Sine;
  s.sigma.offset = 0.6;
  s.sigma.scale = 0.2;
  s.sigma.y_coef = 0.5;
  s.b.family = FieldFamily::Tanh;
  s.b.scale = 0.8;
  s.x0.mean = 0.3;
  s.grid_n = grid_n;
  s.inner_refine = inner;
  s.phi = TestFunction::coordinate(0);
  return s;
}

inline bool is_linear_gaussian(const Scenario& s) {
  return s.kernel.is_brownian() && s.d_X == 1 && s.d_Y == 1 && s.sigma.family == FieldFamily::Constant && s.b.family == FieldFamily::Linear &&
         s.b.offset == 0.0 && s.b.y_coef == 0.0 && s.x0.kind == InitialLaw::Kind::Gaussian;
}

// ---------------------------------------------------------------- algebra

struct AlgebraResiduals {
  double associativity = 0.0;
  double chen = 0.0;
  double grouplike = 0.0;
  double inverse = 0.0;
};

/// Max residuals over n random level-3 trials in dimensions 1..4.
inline AlgebraResiduals algebra_residuals(std::size_t n, std::uint64_t seed) {
  AlgebraResiduals r;
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto free_element = [&](std::size_t d) {
    GroupIncrement g(d, 3);
    for (double& v : g.raw()) v = nd(rng);
    g.set_geometric(false);
    return g;
  };
  auto grouplike = [&](std::size_t d) {
    std::vector<double> x(d), a(d * d, 0.0);
    for (auto& v : x) v = nd(rng);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) {
        a[i * d + j] = nd(rng);
        a[j * d + i] = -a[i * d + j];
      }
    return exp_lie(x, a, 3);
  };
  for (std::size_t rep = 0; rep < n; ++rep) {
    const std::size_t d = 1 + rep % 4;
    auto a = free_element(d), b = free_element(d), c = free_element(d);
    r.associativity = std::max(r.associativity, max_abs_difference(tensor_mul(tensor_mul(a, b), c), tensor_mul(a, tensor_mul(b, c))));

    std::vector<double> t{0.0, 0.25, 0.5, 1.0};
    std::vector<Eigen::VectorXd> v(t.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
    for (std::size_t k = 1; k < t.size(); ++k)
      for (Eigen::Index i = 0; i < v[k].size(); ++i) v[k](i) = v[k - 1](i) + nd(rng);
    r.chen = std::max(r.chen, chen_residual(lift_segmentwise(SampledFunction1D(t, v), 3), 8, derive_seed(seed, rep + 1)));

    auto g = tensor_mul(grouplike(d), grouplike(d));
    r.grouplike = std::max(r.grouplike, grouplike_residual(g));
    r.inverse = std::max(r.inverse, max_abs_difference(tensor_mul(g, inverse(g)), GroupIncrement::identity(d, 3)));
  }
  return r;
}

// ---------------------------------------------------------------- sampling

struct MomentRow {
  std::string name;
  double empirical = 0.0;
  double analytic = 0.0;
  double stderr_ = 0.0;
};

/// Var(B_T), Cov(B_T, W_T) and Cov(B_{T/2}, B_T) from n_paths joint samples.
inline std::vector<MomentRow> sampling_moments(const VolterraKernel& k, std::size_t grid_n, std::size_t n_paths, std::uint64_t seed,
                                               SamplingMethod method, int threads = 0) {
  if (grid_n < 2 || grid_n % 2 != 0) throw std::invalid_argument("sampling_moments: grid_n must be even");
  const double T = k.horizon();
  const auto grid = uniform_grid(T, grid_n);
  JointSampler sampler(k, grid, method);
  std::vector<double> bb(n_paths), bw(n_paths), bh(n_paths);
  const auto n = static_cast<Eigen::Index>(grid_n), h = static_cast<Eigen::Index>(grid_n / 2);
  parallel_for(
      n_paths,
      [&](std::size_t i) {
        Rng rng = make_rng(seed, i);
        auto smp = sampler.draw(1, 1, rng, derive_seed(seed, i));
        bb[i] = smp.B(0, n) * smp.B(0, n);
        bw[i] = smp.B(0, n) * smp.W(0, n);
        bh[i] = smp.B(0, h) * smp.B(0, n);
      },
      threads);
  std::vector<MomentRow> rows;
  auto add = [&](const char* name, const std::vector<double>& v, double exact) {
    auto ms = mean_stderr(v);
    rows.push_back({name, ms.mean, exact, ms.stderr_});
  };
  add("var_B_T", bb, k.covariance(T, T));
  add("cov_B_T_W_T", bw, k.cross_covariance(T, 0.0, T));
  add("cov_B_half_B_T", bh, k.covariance(0.5 * T, T));
  return rows;
}

/// Max deviation of every kernel family at H = 1/2 from the Brownian covariance,
/// cross covariance and panel weights on a uniform grid.
inline double kernel_collapse_error(std::size_t grid_n) {
  const auto grid = uniform_grid(1.0, grid_n);
  double err = 0.0;
  const VolterraKernel bm;
  const auto wb = panel_weights(bm, grid);
  for (auto fam : {KernelFamily::MandelbrotVanNess, KernelFamily::RiemannLiouville}) {
    const VolterraKernel k(fam, 0.5);
    for (double s : grid)
      for (double t : grid) {
        err = std::max(err, std::abs(k.covariance(s, t) - std::min(s, t)));
        err = std::max(err, std::abs(k.cross_covariance(t, 0.0, s) - std::min(s, t)));
      }
    err = std::max(err, (panel_weights(k, grid) - wb).cwiseAbs().maxCoeff());
  }
  return err;
}

// ---------------------------------------------------------------- RDE

struct RdeChecks {
  std::vector<double> mesh;
  std::vector<double> scalar_error;
  std::vector<double> matrix_error;
  double scalar_slope = 0.0;
  double matrix_slope = 0.0;
  double flow_gap = 0.0;
  double brownian_reduction_gap = 0.0;
};

/// Linear fields with commuting matrices have the closed form y_t = exp(Σ A_i x^i_t) y_0
/// for any geometric driver; the study refines a smooth two-dimensional driver.
inline RdeChecks rde_checks(std::uint64_t seed) {
  RdeChecks r;
  auto path = [](double t) { return Eigen::Vector2d(std::sin(3.0 * t), std::cos(2.0 * t) - 1.0 + 0.5 * t); };
  const Eigen::Vector2d xT = path(1.0);
  Eigen::MatrixXd A1(2, 2), A2(2, 2);
  A1 << 0.4, 0.3, 0.3, -0.2;  // A2 is a polynomial in A1, so they commute
  A2 = 0.5 * A1 * A1 - 0.7 * Eigen::MatrixXd::Identity(2, 2);
  const auto field1 = linear_field({Eigen::MatrixXd::Identity(1, 1)});
  const auto field2 = linear_field({A1, A2});
  const Eigen::Vector2d y0(0.7, -0.4);
  Eigen::MatrixXd gen = A1 * xT(0) + A2 * xT(1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gen);
  const Eigen::VectorXd exact2 = es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() * es.eigenvectors().transpose() * y0;
  const double exact1 = 0.7 * std::exp(xT(0));
  for (std::size_t n : {64u, 128u, 256u, 512u}) {
    auto grid = uniform_grid(1.0, n);
    std::vector<Eigen::VectorXd> v1, v2;
    for (double t : grid) {
      v1.push_back(Eigen::VectorXd::Constant(1, path(t)(0)));
      v2.push_back(path(t));
    }
    auto z1 = solve_rde(lift_segmentwise(SampledFunction1D(grid, v1), 2), field1, Eigen::VectorXd::Constant(1, 0.7));
    auto z2 = solve_rde(lift_segmentwise(SampledFunction1D(grid, v2), 2), field2, y0);
    r.mesh.push_back(1.0 / static_cast<double>(n));
    r.scalar_error.push_back(std::abs(z1.trace(0, static_cast<Eigen::Index>(n)) - exact1));
    r.matrix_error.push_back((z2.at(n) - exact2).norm());
  }
  r.scalar_slope = loglog_slope(r.mesh, r.scalar_error);
  r.matrix_slope = loglog_slope(r.mesh, r.matrix_error);

  VectorField drift;
  drift.state_dim = 1;
  drift.rows = 1;
  drift.cols = 1;
  drift.name = "tanh-drift";
  drift.eval = [](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, -std::tanh(y(0))); };
  {
    VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
    auto grid = uniform_grid(1.0, 64);
    auto s = sample_joint(k, grid, 1, 0, 1, seed, SamplingMethod::Cholesky, 1).front();
    auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 2);
    auto sigma = linear_field({Eigen::MatrixXd::Constant(1, 1, 0.3)});
    auto full = solve_rde_volterra(lift, sigma, drift, k, Eigen::VectorXd::Constant(1, 1.0), 2);
    auto head = solve_rde_volterra(sublift(lift, 0, 24), sigma, drift, k, Eigen::VectorXd::Constant(1, 1.0), 2);
    auto tail = solve_rde_volterra(sublift(lift, 24, 64), sigma, drift, k, head.solution.at(24), 2, {}, &head.history);
    r.flow_gap = std::abs(tail.solution.trace(0, 40) - full.solution.trace(0, 64));
  }
  {
    VolterraKernel k;
    auto s = sample_joint(k, uniform_grid(1.0, 256), 1, 0, 1, derive_seed(seed, 1), SamplingMethod::Convolution, 1).front();
    auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 2);
    auto sigma = constant_field(Eigen::MatrixXd::Constant(1, 1, 0.8), 1);
    auto vol = solve_rde_volterra(lift, sigma, drift, k, Eigen::VectorXd::Constant(1, 0.5), 0);
    RdeOptions opt;
    opt.euler_drift = drift;
    auto mark = solve_rde(lift, sigma, Eigen::VectorXd::Constant(1, 0.5), opt);
    r.brownian_reduction_gap = (vol.solution.trace - mark.trace).cwiseAbs().maxCoeff();
  }
  return r;
}

// ---------------------------------------------------------------- trapezoid conversion

/// One-form on (B, Y, W): L^B = 0.5 sin B, L^Y = 0, L^W = sin Y + Y/2.
inline VectorField trapezoid_test_form() {
  VectorField f;
  f.state_dim = 3;
  f.rows = 1;
  f.cols = 3;
  f.name = "trapezoid-form";
  f.eval = [](const Eigen::VectorXd& z) {
    Eigen::MatrixXd m(1, 3);
    m << 0.5 * std::sin(z(0)), 0.0, std::sin(z(1)) + 0.5 * z(1);
    return m;
  };
  f.jac = [](const Eigen::VectorXd& z) {
    std::vector<Eigen::MatrixXd> j(3, Eigen::MatrixXd::Zero(1, 3));
    j[0](0, 0) = 0.5 * std::cos(z(0));
    j[2](0, 1) = std::cos(z(1)) + 0.5;
    return j;
  };
  f.hess = [](const Eigen::VectorXd& z) {
    std::vector<std::vector<Eigen::MatrixXd>> h(3, std::vector<Eigen::MatrixXd>(1, Eigen::MatrixXd::Zero(3, 3)));
    h[0][0](0, 0) = -0.5 * std::sin(z(0));
    h[2][0](1, 1) = -std::sin(z(1));
    return h;
  };
  return f;
}

struct TrapezoidStudy {
  MeanStderr defect;             ///< on the finest grid
  std::vector<std::size_t> outer;
  std::vector<double> rms;       ///< RMS defect per refinement
  double young_correction_mean = 0.0;
};

/// Brownian kernel. Paths are drawn on finest_outer·inner intervals; refinement l
/// uses every 2^{levels-1-l}-th point with the same number of inner sub-steps.
inline TrapezoidStudy trapezoid_study(std::size_t n_paths, std::size_t finest_outer, std::size_t inner, std::size_t levels, std::uint64_t seed,
                                      int threads = 0) {
  if (levels < 1 || (finest_outer >> (levels - 1)) < 1) throw std::invalid_argument("trapezoid_study: too many levels");
  const VolterraKernel k;
  const auto fine = uniform_grid(1.0, finest_outer * inner);
  JointSampler sampler(k, fine, SamplingMethod::Convolution);
  const auto form = trapezoid_test_form();
  std::vector<std::vector<double>> defect(levels, std::vector<double>(n_paths));
  std::vector<double> corr(n_paths);
  parallel_for(
      n_paths,
      [&](std::size_t i) {
        Rng rng = make_rng(seed, i);
        auto smp = sampler.draw(2, 1, rng, derive_seed(seed, i));  // row 0 observation block, row 1 free Volterra
        for (std::size_t l = 0; l < levels; ++l) {
          const std::size_t stride = std::size_t{1} << (levels - 1 - l);
          const std::size_t m = (fine.size() - 1) / stride;
          std::vector<double> g(m + 1);
          Eigen::MatrixXd B(1, static_cast<Eigen::Index>(m + 1)), Y(1, static_cast<Eigen::Index>(m + 1)), W(1, static_cast<Eigen::Index>(m + 1));
          for (std::size_t j = 0; j <= m; ++j) {
            const auto c = static_cast<Eigen::Index>(j * stride);
            g[j] = fine[j * stride];
            B(0, static_cast<Eigen::Index>(j)) = smp.B(1, c);
            Y(0, static_cast<Eigen::Index>(j)) = smp.B(0, c);
            W(0, static_cast<Eigen::Index>(j)) = smp.W(0, c);
          }
          auto lift = lift_joint_hybrid(g, B, Y, W, 2, inner);
          auto r = trapezoid_check(compose_one_form(form, controlled_driver(lift)), lift, k, 1, 1);
          defect[l][i] = r.defect;
          if (l + 1 == levels) corr[i] = r.young_correction;
        }
      },
      threads);
  TrapezoidStudy st;
  st.defect = mean_stderr(defect.back());
  st.young_correction_mean = mean_stderr(corr).mean;
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> sq(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) sq[i] = defect[l][i] * defect[l][i];
    st.outer.push_back(finest_outer >> (levels - 1 - l));
    st.rms.push_back(std::sqrt(pairwise_sum(sq) / static_cast<double>(n_paths)));
  }
  return st;
}

// ---------------------------------------------------------------- weights

/// exp Ξ_T for one reference-measure path on the scenario's own grids.
inline double rough_log_weight(const Scenario& s, const TruthPath& p) {
  auto lift = lift_joint_hybrid(p.grid, p.B, p.Y, p.W, s.lift_level(), s.inner_refine);
  auto z = solve_decoupled(s, lift, p.X.col(0));
  return xi_rough(s, lift, z)(static_cast<Eigen::Index>(s.grid_n));
}

struct WeightStudy {
  MeanStderr lambda;  ///< E[Λ_T]
  MeanStderr exp_xi;  ///< E[exp Ξ_T]
  std::vector<std::size_t> outer;
  std::vector<double> gap;  ///< mean |Ξ_T − log Λ_T| per outer grid
  double slope = 0.0;       ///< −d log gap / d log n
};

inline WeightStudy weight_study(const Scenario& s, std::size_t n_paths, std::size_t gap_paths, std::size_t fine_intervals,
                                const std::vector<std::size_t>& outer, std::uint64_t seed, int threads = 0) {
  WeightStudy st;
  {
    TruthSimulator sim(s);
    std::vector<double> lam(n_paths), ex(n_paths);
    parallel_for(
        n_paths,
        [&](std::size_t i) {
          auto p = sim.simulate(derive_seed(seed, i), Measure::Reference);
          lam[i] = std::exp(p.log_lambda(p.log_lambda.size() - 1));
          ex[i] = std::exp(rough_log_weight(s, p));
        },
        threads);
    st.lambda = mean_stderr(lam);
    st.exp_xi = mean_stderr(ex);
  }
  Scenario f = s;
  f.grid_n = 1;
  f.inner_refine = fine_intervals;
  TruthSimulator sim(f);
  std::vector<std::vector<double>> gap(outer.size(), std::vector<double>(gap_paths));
  parallel_for(
      gap_paths,
      [&](std::size_t i) {
        auto p = sim.simulate(derive_seed(derive_seed(seed, 0xabcdef), i), Measure::Reference);
        for (std::size_t l = 0; l < outer.size(); ++l) {
          Scenario c = s;
          c.grid_n = outer[l];
          c.inner_refine = fine_intervals / outer[l];
          gap[l][i] = std::abs(rough_log_weight(c, p) - p.log_lambda(static_cast<Eigen::Index>(fine_intervals)));
        }
      },
      threads);
  std::vector<double> mesh;
  for (std::size_t l = 0; l < outer.size(); ++l) {
    st.outer.push_back(outer[l]);
    st.gap.push_back(mean_stderr(gap[l]).mean);
    mesh.push_back(1.0 / static_cast<double>(outer[l]));
  }
  st.slope = loglog_slope(mesh, st.gap);
  return st;
}

// ---------------------------------------------------------------- filtering oracles

struct KalmanStudy {
  std::vector<double> filter_mean, filter_stderr, kalman_mean, rel_error;
  double mean_rel_error = 0.0;
};

/// Normalized posterior mean at T against the Kalman-Bucy mean on independent observation draws.
inline KalmanStudy kalman_study(const Scenario& s, std::size_t draws, std::size_t n_mc, std::uint64_t seed, int threads = 0) {
  if (!is_linear_gaussian(s)) throw std::invalid_argument("kalman_study: scenario is not linear-Gaussian");
  const double sig = s.sigma.offset + s.sigma.scale, beta = s.b.scale * s.b.x_coef;
  KalmanStudy st;
  TruthSimulator sim(s);
  FilterOptions fo;
  fo.threads = threads;
  TestFunction x = TestFunction::coordinate(0);
  for (std::size_t d = 0; d < draws; ++d) {
    auto p = sim.simulate(derive_seed(seed, d));
    auto kb = kalman_bucy(p.grid, p.Y.row(0), s.x0.mean, s.x0.sd * s.x0.sd, sig, beta);
    auto fs = filter_samples(s, observed(p), n_mc, derive_seed(seed, 1000 + d), {s.T}, fo);
    auto e = normalized_estimates(fs, x).front();
    st.filter_mean.push_back(e.value);
    st.filter_stderr.push_back(e.stderr_);
    st.kalman_mean.push_back(kb.mean.back());
    st.rel_error.push_back(std::abs(e.value - kb.mean.back()) / std::abs(kb.mean.back()));
  }
  st.mean_rel_error = mean_stderr(st.rel_error).mean;
  return st;
}

struct TowerStudy {
  MeanStderr filter_average;  ///< average over observation paths of E[φ(X_T) | Y]
  MeanStderr direct;          ///< direct simulation of E[φ(X_T)]
  double z = 0.0;             ///< |difference| / combined stderr
};

inline TowerStudy tower_study(const Scenario& s, std::size_t n_obs, std::size_t n_mc, std::size_t n_direct, std::uint64_t seed, int threads = 0) {
  TruthSimulator sim(s);
  FilterOptions fo;
  fo.threads = threads;
  std::vector<double> est(n_obs);
  for (std::size_t i = 0; i < n_obs; ++i) {
    auto p = sim.simulate(derive_seed(seed, i));
    auto fs = filter_samples(s, observed(p), n_mc, derive_seed(seed, 5000 + i), {s.T}, fo);
    est[i] = normalized_estimates(fs, s.phi).front().value;
  }
  std::vector<double> direct(n_direct);
  const auto last = static_cast<Eigen::Index>(s.fine_grid().size() - 1);
  parallel_for(
      n_direct, [&](std::size_t i) { direct[i] = s.phi(sim.simulate(derive_seed(derive_seed(seed, 0x70e7), i)).X.col(last)); }, threads);
  TowerStudy st;
  st.filter_average = mean_stderr(est);
  st.direct = mean_stderr(direct);
  st.z = std::abs(st.filter_average.mean - st.direct.mean) / std::hypot(st.filter_average.stderr_, st.direct.stderr_);
  return st;
}

/// No-information check: with b ≡ 0 the normalized filter must reproduce the prior
/// mean of φ(X_t) obtained by independent simulation. Returns per-time z-scores.
struct PriorCheckRow {
  double t = 0.0;
  double filter = 0.0, filter_stderr = 0.0;
  double prior = 0.0, prior_stderr = 0.0;
  double z = 0.0;
};

inline std::vector<PriorCheckRow> no_information_check(const Scenario& s, std::size_t n_mc, const std::vector<double>& t_eval, std::uint64_t seed,
                                                       int threads = 0) {
  if (!s.b.is_zero()) throw std::invalid_argument("no_information_check: requires b ≡ 0");
  TruthSimulator sim(s);
  auto p = sim.simulate(seed);
  FilterOptions fo;
  fo.threads = threads;
  auto est = normalized_estimates(filter_samples(s, observed(p), n_mc, derive_seed(seed, 1), t_eval, fo), s.phi);
  const auto fine = s.fine_grid();
  std::vector<std::size_t> idx;
  for (double t : t_eval) idx.push_back(detail::grid_index(fine, t, "no_information_check"));
  std::vector<std::vector<double>> prior(t_eval.size(), std::vector<double>(n_mc));
  parallel_for(
      n_mc,
      [&](std::size_t i) {
        auto q = sim.simulate(derive_seed(derive_seed(seed, 2), i));
        for (std::size_t k = 0; k < idx.size(); ++k) prior[k][i] = s.phi(q.X.col(static_cast<Eigen::Index>(idx[k])));
      },
      threads);
  std::vector<PriorCheckRow> rows;
  for (std::size_t k = 0; k < t_eval.size(); ++k) {
    auto ms = mean_stderr(prior[k]);
    PriorCheckRow r{t_eval[k], est[k].value, est[k].stderr_, ms.mean, ms.stderr_, 0.0};
    const double se = std::hypot(r.filter_stderr, r.prior_stderr);
    r.z = se > 0.0 ? std::abs(r.filter - r.prior) / se : (r.filter == r.prior ? 0.0 : INFINITY);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------- robustness

struct RobustnessStudy {
  std::vector<double> delta;
  std::vector<double> value;   ///< normalized estimate of φ at T
  std::vector<double> change;  ///< |value(δ) − value(0)|
  bool monotone = false;
};

/// Cameron-Martin shifts of one observed pair at δ, δ/2, ..., common random numbers in the filter.
inline RobustnessStudy robustness_study(const Scenario& s, double delta, std::size_t halvings, std::size_t n_mc, std::uint64_t seed, int threads = 0) {
  auto p = simulate_truth(s, seed);
  FilterOptions fo;
  fo.threads = threads;
  RobustnessStudy st;
  auto run = [&](double d) {
    auto obs = cameron_martin_shift(observed(p), s.kernel, d);
    return normalized_estimates(filter_samples(s, obs, n_mc, derive_seed(seed, 1), {s.T}, fo), s.phi).front().value;
  };
  const double base = run(0.0);
  st.delta.push_back(0.0);
  st.value.push_back(base);
  st.change.push_back(0.0);
  double d = delta;
  for (std::size_t k = 0; k < halvings; ++k, d *= 0.5) {
    st.delta.push_back(d);
    st.value.push_back(run(d));
    st.change.push_back(std::abs(st.value.back() - base));
  }
  std::vector<double> ch(st.change.begin() + 1, st.change.end());
  st.monotone = strictly_decreasing(ch);
  return st;
}

}  // namespace roughfilter
