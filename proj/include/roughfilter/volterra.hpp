#pragma once

// Volterra kernels for Brownian motion and the two fractional Brownian
// motions with H in (1/4, 1/2], their covariances, and exact joint
// simulation of (W, B) on a time grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "parallel.hpp"
#include "quadrature.hpp"
#include "variation.hpp"

namespace roughfilter {

enum class KernelFamily { Brownian, MandelbrotVanNess, RiemannLiouville };

inline std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Brownian: return "brownian";
    case KernelFamily::MandelbrotVanNess: return "mvn";
    case KernelFamily::RiemannLiouville: return "rl";
  }
  return "?";
}

inline KernelFamily parse_kernel_family(const std::string& s) {
  if (s == "brownian" || s == "bm") return KernelFamily::Brownian;
  if (s == "mvn" || s == "mandelbrot-van-ness" || s == "MandelbrotVanNess") return KernelFamily::MandelbrotVanNess;
  if (s == "rl" || s == "riemann-liouville" || s == "RiemannLiouville") return KernelFamily::RiemannLiouville;
  throw std::invalid_argument("unknown kernel family '" + s + "'");
}

/// K(t, s) with B_t = ∫_0^t K(t,s) dW_s.
///
/// Mandelbrot-Van Ness uses the Molchan-Golosov form for H < 1/2,
///   K(t,s) = c_H [ (t/s)^{H-1/2} (t-s)^{H-1/2}
///                  - (H-1/2) s^{1/2-H} ∫_s^t u^{H-3/2} (u-s)^{H-1/2} du ],
/// where the inner integral is s^{2H-1} B(1-2H, H+1/2) (1 - I_{s/t}(1-2H, H+1/2)),
/// normalized so that Var(B_1) = 1. Riemann-Liouville is
/// K(t,s) = (t-s)^{H-1/2} / Γ(H+1/2). At H = 1/2 both reduce to 1_{s<t}.
class VolterraKernel {
 public:
  explicit VolterraKernel(KernelFamily family = KernelFamily::Brownian, double hurst = 0.5, double horizon = 1.0,
                          int quadrature_points = 64)
      : family_(family), H_(family == KernelFamily::Brownian ? 0.5 : hurst), T_(horizon), quad_(quadrature_points) {
    if (!(H_ > 0.25 && H_ <= 0.5)) {
      throw std::invalid_argument("VolterraKernel: Hurst parameter must lie in (1/4, 1/2], got " + std::to_string(hurst));
    }
    if (!(T_ > 0.0)) throw std::invalid_argument("VolterraKernel: horizon must be positive");
    if (quad_ < 2) throw std::invalid_argument("VolterraKernel: need at least 2 quadrature points");
    if (family_ == KernelFamily::MandelbrotVanNess && !is_brownian()) {
      const double a = 1.0 - 2.0 * H_, b = H_ + 0.5;
      beta_ab_ = boost::math::beta(a, b);
      c_H_ = std::sqrt(2.0 * H_ / (a * beta_ab_));
    }
  }

  KernelFamily family() const { return family_; }
  double hurst() const { return H_; }
  double horizon() const { return T_; }
  int quadrature_points() const { return quad_; }
  /// ρ = 1/(2H), the covariance variation index.
  double rho() const { return 1.0 / (2.0 * H_); }
  bool is_brownian() const { return family_ == KernelFamily::Brownian || H_ == 0.5; }

  double kernel_eval(double t, double s) const {
    check_time(t, "kernel_eval");
    check_time(s, "kernel_eval");
    return raw_kernel(t, s);
  }

  /// R(s, t) = ∫ K(t,r) K(s,r) dr.
  double covariance(double s, double t) const {
    check_time(s, "covariance");
    check_time(t, "covariance");
    if (s > t) std::swap(s, t);
    if (s <= 0.0) return 0.0;
    if (is_brownian()) return s;
    if (family_ == KernelFamily::MandelbrotVanNess) {
      return 0.5 * (std::pow(s, 2 * H_) + std::pow(t, 2 * H_) - std::pow(t - s, 2 * H_));
    }
    const double g = std::tgamma(H_ + 0.5);
    if (t == s) return std::pow(s, 2 * H_) / (2 * H_ * g * g);
    return rl_offdiag(s, t);
  }

  /// E[B_t W_{u,v}] = ∫_u^v K(t, r) dr; zero when u >= t.
  double cross_covariance(double t, double u, double v) const {
    if (u > v) throw std::invalid_argument("cross_covariance: require u <= v");
    check_time(t, "cross_covariance");
    return panel_integral(t, u, v);
  }

  /// ∫_a^b K(t, r) dr with the Volterra support clipped at t.
  double panel_integral(double t, double a, double b) const {
    b = std::min(b, t);
    a = std::max(a, 0.0);
    if (!(b > a)) return 0.0;
    if (is_brownian()) return b - a;
    if (family_ == KernelFamily::RiemannLiouville) {
      const double e = H_ + 0.5;
      return (std::pow(t - a, e) - std::pow(t - b, e)) / (e * std::tgamma(e));
    }
    const bool left = a <= 0.0;
    const bool right = b >= t;
    // Regular panels are smooth; fewer nodes suffice there.
    const int n = (left || right) ? quad_ : std::max(8, quad_ / 4);
    return singular_integrate([&](double r) { return raw_kernel(t, r); }, a, b, H_ - 0.5, left, right, n);
  }

 private:
  void check_time(double t, const char* what) const {
    const double tol = 1e-12 * std::max(1.0, T_);
    if (t < -tol || t > T_ + tol) {
      throw std::invalid_argument(std::string(what) + ": time " + std::to_string(t) + " outside [0, " + std::to_string(T_) + "]");
    }
  }

  double raw_kernel(double t, double s) const {
    if (s >= t || s < 0.0) return 0.0;
    if (is_brownian()) return 1.0;
    if (family_ == KernelFamily::RiemannLiouville) return std::pow(t - s, H_ - 0.5) / std::tgamma(H_ + 0.5);
    if (s == 0.0) return std::numeric_limits<double>::infinity();
    const double a = 1.0 - 2.0 * H_, b = H_ + 0.5;
    const double lead = std::pow(t / s, H_ - 0.5) * std::pow(t - s, H_ - 0.5);
    const double inner = std::pow(s, 2.0 * H_ - 1.0) * beta_ab_ * boost::math::ibetac(a, b, s / t);
    return c_H_ * (lead - (H_ - 0.5) * std::pow(s, 0.5 - H_) * inner);
  }

  double rl_offdiag(double s, double t) const {
    // ∫_0^s (t-r)^{α} (s-r)^{α} dr / Γ(H+1/2)^2 with x = s - r.
    const double alpha = H_ - 0.5, gap = t - s;
    const double g = std::tgamma(H_ + 0.5);
    boost::math::quadrature::tanh_sinh<double> integrator;
    auto f = [&](double x, double xc) {
      // xc = s - x, exact near the upper endpoint
      (void)xc;
      if (x <= 0.0) return 0.0;
      return std::pow(gap + x, alpha) * std::pow(x, alpha);
    };
    const double v = integrator.integrate(f, 0.0, s, 1e-13);
    return v / (g * g);
  }

  KernelFamily family_;
  double H_;
  double T_;
  int quad_;
  double beta_ab_ = 0.0;
  double c_H_ = 0.0;
};

/// Joint (W, B) sample on a grid; column k holds the value at grid[k].
/// Row j of W is the Brownian motion driving row j of B, for j < d_W.
struct JointGaussianSample {
  std::vector<double> grid;
  Eigen::MatrixXd W;
  Eigen::MatrixXd B;
  std::uint64_t seed = 0;
};

enum class SamplingMethod { Cholesky, Convolution };

inline SamplingMethod parse_sampling_method(const std::string& s) {
  if (s == "cholesky") return SamplingMethod::Cholesky;
  if (s == "convolution") return SamplingMethod::Convolution;
  throw std::invalid_argument("unknown sampling method '" + s + "'");
}

inline std::vector<double> uniform_grid(double T, std::size_t intervals) {
  std::vector<double> g(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) g[i] = T * static_cast<double>(i) / static_cast<double>(intervals);
  g.back() = T;
  return g;
}

inline void validate_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw std::invalid_argument("grid: need at least two points");
  if (grid.front() != 0.0) throw std::invalid_argument("grid: must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("grid: must be strictly increasing");
}

/// Integrated-kernel weights w(i, j) = ∫_{t_j}^{t_{j+1}} K(t_i, u) du (zero for j >= i).
inline Eigen::MatrixXd panel_weights(const VolterraKernel& k, const std::vector<double>& grid) {
  const std::size_t n = grid.size();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) w(i, j) = k.panel_integral(grid[i], grid[j], grid[j + 1]);
  return w;
}

/// Convolution coefficients c(i, j) = w(i, j) / Δt_j, so B(t_i) = Σ_j c(i, j) ΔW_j.
inline Eigen::MatrixXd convolution_matrix(const VolterraKernel& k, const std::vector<double>& grid) {
  Eigen::MatrixXd c = panel_weights(k, grid);
  for (Eigen::Index j = 0; j + 1 < c.cols(); ++j) c.col(j) /= grid[static_cast<std::size_t>(j) + 1] - grid[static_cast<std::size_t>(j)];
  c.col(c.cols() - 1).setZero();
  return c;
}

/// Lower Cholesky factor of the joint covariance of (W_{t_1..t_m}, B_{t_1..t_m}) for one component pair.
struct JointCholesky {
  Eigen::MatrixXd L;
  double jitter = 0.0;
  double min_eigenvalue = 0.0;
};

/// Joint covariance in the order (B_{t_1..t_m}, W_{t_1..t_m}).
inline Eigen::MatrixXd joint_covariance(const VolterraKernel& k, const std::vector<double>& grid) {
  const std::size_t m = grid.size() - 1;
  const auto M = static_cast<Eigen::Index>(2 * m);
  Eigen::MatrixXd C(M, M);
  // E[B_{t_i} W_{t_j}] = Σ_{l < j} w(i, l)
  const Eigen::MatrixXd w = panel_weights(k, grid);
  for (std::size_t i = 0; i < m; ++i) {
    const double ti = grid[i + 1];
    for (std::size_t j = 0; j <= i; ++j) {
      const double tj = grid[j + 1];
      const double r = k.covariance(ti, tj);
      C(i, j) = C(j, i) = r;
      const double bw = std::min(ti, tj);
      C(m + i, m + j) = C(m + j, m + i) = bw;
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      acc += w(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(j));
      C(i, m + j) = C(m + j, i) = acc;
    }
  }
  return C;
}

/// Block factorization: W first (its covariance min(s,t) is well conditioned),
/// then B given W through the Schur complement, which is numerically zero for
/// the Brownian kernel and near-singular on fine grids.
inline JointCholesky joint_cholesky(const VolterraKernel& k, const std::vector<double>& grid) {
  const Eigen::MatrixXd C = joint_covariance(k, grid);
  const Eigen::Index m = C.rows() / 2;
  JointCholesky out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();

  const Eigen::MatrixXd Cbb = C.topLeftCorner(m, m);
  const Eigen::MatrixXd Cww = C.bottomRightCorner(m, m);
  const Eigen::MatrixXd Cbw = C.topRightCorner(m, m);
  Eigen::LLT<Eigen::MatrixXd> lw(Cww);
  if (lw.info() != Eigen::Success) throw std::runtime_error("joint_cholesky: Brownian block not positive definite");
  const Eigen::MatrixXd Lw = lw.matrixL();
  // G = Cbw Lw^{-T}, so that B = G z_W + Ls z_B
  const Eigen::MatrixXd G = Lw.triangularView<Eigen::Lower>().solve(Cbw.transpose()).transpose();
  Eigen::MatrixXd S = Cbb - G * G.transpose();
  S = 0.5 * (S + S.transpose());

  // Symmetric square root of the Schur complement. Eigenvalues below
  // 1e-12 * trace(C)/n are rounding noise and are set to zero; the threshold is
  // reported as the regularization used.
  const double tol = 1e-12 * C.trace() / static_cast<double>(C.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw std::runtime_error("joint_cholesky: eigendecomposition failed");
  Eigen::VectorXd lam = es.eigenvalues();
  double jitter = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < -1e-8 * std::max(1.0, C.trace() / static_cast<double>(C.rows())))
      throw std::runtime_error("joint_cholesky: covariance not positive semidefinite");
    if (lam(i) < tol) {
      lam(i) = 0.0;
      jitter = tol;
    }
  }
  const Eigen::MatrixXd Ls = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
  out.jitter = jitter;
  out.L = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  out.L.topLeftCorner(m, m) = Lw;
  out.L.bottomLeftCorner(m, m) = G;
  out.L.bottomRightCorner(m, m) = Ls;
  return out;
}

/// Reusable sampler; the expensive factorization/weights are built once per (kernel, grid).
class JointSampler {
 public:
  JointSampler(const VolterraKernel& k, std::vector<double> grid, SamplingMethod method)
      : kernel_(k), grid_(std::move(grid)), method_(method) {
    validate_grid(grid_);
    if (method_ == SamplingMethod::Cholesky) {
      chol_ = joint_cholesky(kernel_, grid_);
    } else {
      conv_ = convolution_matrix(kernel_, grid_);
    }
  }

  const std::vector<double>& grid() const { return grid_; }
  double jitter() const { return chol_.jitter; }
  const Eigen::MatrixXd& convolution() const { return conv_; }

  /// Draws one path with d_B Volterra components and the first d_W associated Brownian motions.
  JointGaussianSample draw(std::size_t d_B, std::size_t d_W, Rng& rng, std::uint64_t seed = 0) const {
    if (d_W > d_B) throw std::invalid_argument("sample_joint: d_W must not exceed d_B");
    const std::size_t n = grid_.size();
    JointGaussianSample s;
    s.grid = grid_;
    s.seed = seed;
    s.B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_B), static_cast<Eigen::Index>(n));
    s.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d_W), static_cast<Eigen::Index>(n));
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t m = n - 1;
    for (std::size_t c = 0; c < d_B; ++c) {
      Eigen::VectorXd bvals, wvals;
      if (method_ == SamplingMethod::Cholesky) {
        Eigen::VectorXd z(static_cast<Eigen::Index>(2 * m));
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        Eigen::VectorXd x = chol_.L * z;
        wvals = x.head(static_cast<Eigen::Index>(m));
        bvals = x.tail(static_cast<Eigen::Index>(m));
      } else {
        Eigen::VectorXd dW(static_cast<Eigen::Index>(n));
        dW.setZero();
        for (std::size_t j = 0; j < m; ++j) dW(static_cast<Eigen::Index>(j)) = normal(rng) * std::sqrt(grid_[j + 1] - grid_[j]);
        wvals.resize(static_cast<Eigen::Index>(m));
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          acc += dW(static_cast<Eigen::Index>(j));
          wvals(static_cast<Eigen::Index>(j)) = acc;
        }
        // the Brownian convolution matrix is the cumulative sum
        if (kernel_.is_brownian()) {
          bvals = wvals;
        } else {
          Eigen::VectorXd full = conv_ * dW;
          bvals = full.tail(static_cast<Eigen::Index>(m));
        }
      }
      s.B.row(static_cast<Eigen::Index>(c)).tail(static_cast<Eigen::Index>(m)) = bvals.transpose();
      if (c < d_W) s.W.row(static_cast<Eigen::Index>(c)).tail(static_cast<Eigen::Index>(m)) = wvals.transpose();
    }
    return s;
  }

 private:
  VolterraKernel kernel_;
  std::vector<double> grid_;
  SamplingMethod method_;
  JointCholesky chol_;
  Eigen::MatrixXd conv_;
};

/// n_paths independent joint samples; path i uses the stream derive_seed(seed, i).
inline std::vector<JointGaussianSample> sample_joint(const VolterraKernel& k, const std::vector<double>& grid, std::size_t d_B,
                                                     std::size_t d_W, std::size_t n_paths, std::uint64_t seed,
                                                     SamplingMethod method, int threads = 0) {
  if (n_paths < 1) throw std::invalid_argument("sample_joint: n_paths must be >= 1");
  JointSampler sampler(k, grid, method);
  std::vector<JointGaussianSample> out(n_paths);
  parallel_for(
      n_paths,
      [&](std::size_t i) {
        Rng rng = make_rng(seed, i);
        out[i] = sampler.draw(d_B, d_W, rng, derive_seed(seed, i));
      },
      threads);
  return out;
}

/// Path of Brownian increments recovered from a Volterra path by forward substitution
/// in B(t_i) = Σ_{j<i} c(i,j) ΔW_j. Experimental: the triangular system is
/// ill-conditioned for H < 1/2 and amplifies noise on fine grids.
inline Eigen::VectorXd recover_brownian_experimental(const Eigen::MatrixXd& conv, const Eigen::VectorXd& B) {
  const Eigen::Index n = B.size();
  Eigen::VectorXd dW = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 1; i < n; ++i) {
    double acc = B(i);
    for (Eigen::Index j = 0; j + 1 < i; ++j) acc -= conv(i, j) * dW(j);
    dW(i - 1) = acc / conv(i, i - 1);
  }
  Eigen::VectorXd W = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 1; i < n; ++i) W(i) = W(i - 1) + dW(i - 1);
  return W;
}

// ---------------------------------------------------------------------------
// Condition diagnostics

enum class DiagnosticStatus { Pass, Warn };

struct DiagnosticItem {
  std::string name;
  double value = 0.0;
  DiagnosticStatus status = DiagnosticStatus::Pass;
  std::string detail;
  std::vector<double> scale_values;  ///< per dyadic scale, where meaningful
};

struct ConditionReport {
  double rho = 1.0;
  double p = 2.0;
  std::vector<DiagnosticItem> items;

  const DiagnosticItem& item(const std::string& name) const {
    for (const auto& i : items)
      if (i.name == name) return i;
    throw std::out_of_range("ConditionReport: no item " + name);
  }
  bool all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const auto& i) { return i.status == DiagnosticStatus::Pass; });
  }
};

namespace detail {

/// Max over dyadic-scale windows of f(a, b) for each scale 2^-level (coarse to fine).
template <class F>
std::vector<double> dyadic_sweep(std::size_t intervals, F&& f) {
  std::vector<double> out;
  for (std::size_t width = intervals; width >= 1; width /= 2) {
    double m = 0.0;
    for (std::size_t a = 0; a + width <= intervals; a += width) m = std::max(m, f(a, a + width));
    out.push_back(m);
    if (width == 1) break;
  }
  return out;
}

inline bool bounded_trend(const std::vector<double>& v, double slack = 1.25) {
  if (v.empty()) return true;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!std::isfinite(v[i]) || v[i] > slack * v.front() + 1e-12) return false;
  return std::isfinite(v.front());
}

}  // namespace detail

/// Grid-level diagnostics for the covariance conditions: ρ-variation of R,
/// Hölder domination ϖ_R([s,t]^2)/|t-s|, cross-covariance ρ'-variation, the
/// smoothing exponent of K on a test path, and monotonicity of R(s,s).
inline ConditionReport condition_report(const VolterraKernel& k, const std::vector<double>& grid, double p) {
  validate_grid(grid);
  ConditionReport rep;
  rep.rho = k.rho();
  rep.p = p;
  const double rho = rep.rho;
  const std::size_t n = grid.size();
  const double T = grid.back();

  auto R = SampledFunction2D::from(grid, grid, [&](double s, double t) { return k.covariance(s, t); });
  auto omega = [&](std::size_t a, std::size_t b) {
    auto r = rho_var_2d(R, rho, {grid[a], grid[b], grid[a], grid[b]});
    return std::pow(r.value, rho);
  };

  {
    auto r = rho_var_2d(R, rho, {0.0, T, 0.0, T});
    DiagnosticItem it{"rho_variation", r.value, std::isfinite(r.value) ? DiagnosticStatus::Pass : DiagnosticStatus::Warn,
                      r.lower_bound ? "grid lower bound" : "exact", {}};
    rep.items.push_back(it);
  }
  {
    auto ratios = detail::dyadic_sweep(n - 1, [&](std::size_t a, std::size_t b) { return omega(a, b) / (grid[b] - grid[a]); });
    DiagnosticItem it{"holder_domination", *std::max_element(ratios.begin(), ratios.end()),
                      detail::bounded_trend(ratios) ? DiagnosticStatus::Pass : DiagnosticStatus::Warn,
                      "max over dyadic windows of varpi_R([s,t]^2)/|t-s|, per scale", ratios};
    rep.items.push_back(it);
  }
  {
    const double rho_prime = 2.0 * rho / (rho + 1.0);
    auto X = SampledFunction2D::from(grid, grid, [&](double s, double u) { return k.cross_covariance(s, 0.0, u); });
    auto r = rho_var_2d(X, rho_prime, {0.0, T, 0.0, T});
    const double bound = std::pow(omega(0, n - 1), 1.0 / rho_prime);
    DiagnosticItem it{"cross_covariance_variation", r.value,
                      std::isfinite(r.value) ? DiagnosticStatus::Pass : DiagnosticStatus::Warn,
                      "rho' = " + std::to_string(rho_prime) + ", ratio to varpi_R^{1/rho'} = " + std::to_string(r.value / bound),
                      {}};
    rep.items.push_back(it);
  }
  {
    // Kf for the Lipschitz test path f(t) = t; ||Kf||^{p'}_{p'-var;[s,t]} / (ω_f([0,t]) |t-s|)
    const double pp = 2.0 * p / (p + 2.0);
    Eigen::MatrixXd w = panel_weights(k, grid);
    std::vector<double> kf(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) kf[i] += w(i, j) * grid[j];
    auto F = SampledFunction1D::scalar(grid, kf);
    auto ratios = detail::dyadic_sweep(n - 1, [&](std::size_t a, std::size_t b) {
      return p_variation_control(F, pp, a, b) / (grid[b] * (grid[b] - grid[a]));
    });
    DiagnosticItem it{"kernel_smoothing", *std::max_element(ratios.begin(), ratios.end()),
                      detail::bounded_trend(ratios, 4.0) ? DiagnosticStatus::Pass : DiagnosticStatus::Warn,
                      "p' = " + std::to_string(pp) + " variation of K applied to f(t)=t, per scale", ratios};
    rep.items.push_back(it);
  }
  {
    double min_inc = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < n; ++i) min_inc = std::min(min_inc, k.covariance(grid[i], grid[i]) - k.covariance(grid[i - 1], grid[i - 1]));
    DiagnosticItem it{"diagonal_monotone", min_inc, min_inc > 0.0 ? DiagnosticStatus::Pass : DiagnosticStatus::Warn,
                      "min increment of R(s,s) on the grid", {}};
    rep.items.push_back(it);
  }
  return rep;
}

}  // namespace roughfilter
