#pragma once

// Signal-observation scenarios, Girsanov weights, the decoupled Monte-Carlo
// robust filter, normalized filtering, and the trapezoid conversion check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "density.hpp"
#include "parallel.hpp"
#include "rde.hpp"
#include "rough_lift.hpp"
#include "variation.hpp"
#include "volterra.hpp"

namespace roughfilter {

// ---------------------------------------------------------------- field registry

enum class FieldFamily { Constant, Linear, Tanh, Sine };

inline std::string to_string(FieldFamily f) {
  switch (f) {
    case FieldFamily::Constant: return "constant";
    case FieldFamily::Linear: return "linear";
    case FieldFamily::Tanh: return "tanh";
    case FieldFamily::Sine: return "sine";
  }
  return "?";
}

inline FieldFamily parse_field_family(const std::string& s) {
  if (s == "constant") return FieldFamily::Constant;
  if (s == "linear") return FieldFamily::Linear;
  if (s == "tanh") return FieldFamily::Tanh;
  if (s == "sine") return FieldFamily::Sine;
  throw std::invalid_argument("unknown field family '" + s + "' (expected constant, linear, tanh or sine)");
}

/// Scalar entry offset + scale·g(u) with u = x_coef·x + y_coef·y, where g is
/// 1, u, tanh u or sin u for the constant, linear, tanh and sine families.
struct FieldSpec {
  FieldFamily family = FieldFamily::Constant;
  double offset = 0.0;
  double scale = 1.0;
  double x_coef = 1.0;
  double y_coef = 0.0;

  /// g(u), g'(u), g''(u) scaled by `scale`, plus the offset on the value.
  std::array<double, 3> eval(double u) const {
    switch (family) {
      case FieldFamily::Constant: return {offset + scale, 0.0, 0.0};
      case FieldFamily::Linear: return {offset + scale * u, scale, 0.0};
      case FieldFamily::Tanh: {
        const double t = std::tanh(u), s2 = 1.0 - t * t;
        return {offset + scale * t, scale * s2, -2.0 * scale * t * s2};
      }
      case FieldFamily::Sine: return {offset + scale * std::sin(u), scale * std::cos(u), -scale * std::sin(u)};
    }
    return {0.0, 0.0, 0.0};
  }

  bool is_zero() const { return family == FieldFamily::Constant ? offset + scale == 0.0 : (offset == 0.0 && scale == 0.0); }
};

/// Entry (row, col) of a matrix field on z = (x, y) ∈ R^{d_X + d_Y}, reading x_xi and y_yj.
struct FieldEntry {
  std::size_t row, col, xi, yj;
};

/// Builds a sparse matrix field with analytic first and second derivatives.
inline VectorField registry_field(const FieldSpec& spec, std::size_t d_X, std::size_t d_Y, std::size_t rows, std::size_t cols,
                                  std::vector<FieldEntry> entries, std::string name) {
  VectorField f;
  f.state_dim = d_X + d_Y;
  f.rows = rows;
  f.cols = cols;
  f.name = std::move(name);
  const auto S = static_cast<Eigen::Index>(d_X + d_Y);
  auto arg = [spec, d_X](const Eigen::VectorXd& z, const FieldEntry& e) {
    return spec.x_coef * z(static_cast<Eigen::Index>(e.xi)) + spec.y_coef * z(static_cast<Eigen::Index>(d_X + e.yj));
  };
  f.eval = [spec, entries, rows, cols, arg](const Eigen::VectorXd& z) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (const auto& e : entries) m(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) = spec.eval(arg(z, e))[0];
    return m;
  };
  f.jac = [spec, entries, rows, cols, arg, d_X, S](const Eigen::VectorXd& z) {
    std::vector<Eigen::MatrixXd> J(cols, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), S));
    for (const auto& e : entries) {
      const double d1 = spec.eval(arg(z, e))[1];
      J[e.col](static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.xi)) += d1 * spec.x_coef;
      J[e.col](static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(d_X + e.yj)) += d1 * spec.y_coef;
    }
    return J;
  };
  f.hess = [spec, entries, rows, cols, arg, d_X, S](const Eigen::VectorXd& z) {
    std::vector<std::vector<Eigen::MatrixXd>> H(cols, std::vector<Eigen::MatrixXd>(rows, Eigen::MatrixXd::Zero(S, S)));
    for (const auto& e : entries) {
      const double d2 = spec.eval(arg(z, e))[2];
      const auto a = static_cast<Eigen::Index>(e.xi), c = static_cast<Eigen::Index>(d_X + e.yj);
      auto& h = H[e.col][e.row];
      h(a, a) += d2 * spec.x_coef * spec.x_coef;
      h(a, c) += d2 * spec.x_coef * spec.y_coef;
      h(c, a) += d2 * spec.x_coef * spec.y_coef;
      h(c, c) += d2 * spec.y_coef * spec.y_coef;
    }
    return H;
  };
  return f;
}

// ---------------------------------------------------------------- scenario

struct InitialLaw {
  enum class Kind { Point, Gaussian } kind = Kind::Point;
  double mean = 0.0;
  double sd = 0.0;

  double draw(Rng& rng) const {
    if (kind == Kind::Point) return mean;
    std::normal_distribution<double> n(mean, sd);
    return n(rng);
  }
  double density(double x) const {
    if (kind == Kind::Point) throw std::invalid_argument("InitialLaw: point mass has no density");
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
  }
};

/// Test function φ applied to the signal state.
struct TestFunction {
  enum class Kind { Coordinate, IndicatorAbove, Polynomial, BoundedSmooth } kind = Kind::Coordinate;
  std::size_t coord = 0;
  double threshold = 0.0;
  std::vector<double> coeffs;  ///< c_0 + c_1 x + ...
  std::string tag = "tanh";    ///< bounded_smooth: tanh or gauss
  double factor = 1.0;

  double operator()(const Eigen::VectorXd& x) const {
    if (coord >= static_cast<std::size_t>(x.size())) throw std::invalid_argument("TestFunction: coordinate out of range");
    const double v = x(static_cast<Eigen::Index>(coord));
    double r = 0.0;
    switch (kind) {
      case Kind::Coordinate: r = v; break;
      case Kind::IndicatorAbove: r = v > threshold ? 1.0 : 0.0; break;
      case Kind::Polynomial:
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) r = r * v + *it;
        break;
      case Kind::BoundedSmooth: r = tag == "gauss" ? std::exp(-0.5 * v * v) : std::tanh(v); break;
    }
    return factor * r;
  }

  bool bounded() const { return kind == Kind::IndicatorAbove || kind == Kind::BoundedSmooth || (kind == Kind::Polynomial && coeffs.size() <= 1); }

  static TestFunction one() {
    TestFunction f;
    f.kind = Kind::Polynomial;
    f.coeffs = {1.0};
    return f;
  }
  static TestFunction coordinate(std::size_t i) {
    TestFunction f;
    f.coord = i;
    return f;
  }
};

/// Signal X = x0 + ∫σ(X,Y) dB^X, observation Y = Kb(X,Y) + B^Y, on [0, T].
/// Simulation and filtering use a fine grid of grid_n·inner_refine intervals;
/// the filter's lift lives on the grid_n-interval outer grid.
struct Scenario {
  VolterraKernel kernel;
  std::size_t d_B = 1, d_Y = 1, d_X = 1;
  FieldSpec sigma;
  FieldSpec b;
  InitialLaw x0;
  double T = 1.0;
  std::size_t grid_n = 64;
  std::size_t inner_refine = 8;
  int level = 0;  ///< 0: chosen from H
  SamplingMethod method = SamplingMethod::Convolution;
  TestFunction phi;
  double blowup_bound = 1e8;  ///< sup-norm state bound for every RDE solve

  RdeOptions rde_options() const {
    RdeOptions o;
    o.blowup_bound = blowup_bound;
    return o;
  }

  void validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("Scenario: T must be positive");
    if (d_B == 0 || d_Y == 0 || d_X == 0) throw std::invalid_argument("Scenario: dimensions must be positive");
    if (d_B != d_X) throw std::invalid_argument("Scenario: the built-in σ is diagonal, so d_B must equal d_X");
    if (kernel.horizon() + 1e-12 < T) throw std::invalid_argument("Scenario: kernel horizon shorter than T");
    if (grid_n < 1 || inner_refine < 1) throw std::invalid_argument("Scenario: grid sizes must be positive");
    if (phi.coord >= d_X) throw std::invalid_argument("Scenario: φ coordinate out of range");
    if (x0.kind == InitialLaw::Kind::Gaussian && !(x0.sd > 0.0)) throw std::invalid_argument("Scenario: Gaussian x0 needs sd > 0");
  }

  int lift_level() const { return level > 0 ? level : level_for_p(default_p(kernel.hurst())); }
  std::vector<double> fine_grid() const { return uniform_grid(T, grid_n * inner_refine); }
  std::vector<double> outer_grid() const { return uniform_grid(T, grid_n); }

  /// σ(x, y): d_X × d_B diagonal, entry i reads x_i and y_{min(i, d_Y-1)}.
  VectorField sigma_field() const {
    std::vector<FieldEntry> e;
    for (std::size_t i = 0; i < d_X; ++i) e.push_back({i, i, i, std::min(i, d_Y - 1)});
    auto f = registry_field(sigma, d_X, d_Y, d_X, d_B, e, "sigma");
    return f;
  }

  /// b(x, y) ∈ R^{d_Y}: entry j reads x_{min(j, d_X-1)} and y_j.
  std::vector<FieldEntry> b_entries(std::size_t row_offset, std::size_t col_offset, bool as_row) const {
    std::vector<FieldEntry> e;
    for (std::size_t j = 0; j < d_Y; ++j) {
      const std::size_t xi = std::min(j, d_X - 1);
      if (as_row) e.push_back({0, col_offset + j, xi, j});
      else e.push_back({row_offset + j, 0, xi, j});
    }
    return e;
  }

  /// b̂ = (0, b) as a column field on R^{d_X + d_Y}.
  VectorField drift_field() const { return registry_field(b, d_X, d_Y, d_X + d_Y, 1, b_entries(d_X, 0, false), "drift"); }

  /// b(z) values.
  Eigen::VectorXd b_value(const Eigen::VectorXd& z) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(d_Y));
    for (std::size_t j = 0; j < d_Y; ++j) {
      const std::size_t xi = std::min(j, d_X - 1);
      v(static_cast<Eigen::Index>(j)) = b.eval(b.x_coef * z(static_cast<Eigen::Index>(xi)) + b.y_coef * z(static_cast<Eigen::Index>(d_X + j)))[0];
    }
    return v;
  }

  Eigen::VectorXd draw_x0(Rng& rng) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(d_X));
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = x0.draw(rng);
    return x;
  }
};

// ---------------------------------------------------------------- truth simulation

enum class Measure { Reference, Signal };

/// A simulated path on the fine grid. log_lambda is the left-point Itô
/// exponent Σ b(Z_j)·ΔW_j − ½|b(Z_j)|²Δ_j.
struct TruthPath {
  std::vector<double> grid;
  Eigen::MatrixXd X, Y, W, B;
  Eigen::VectorXd log_lambda;
  std::uint64_t seed = 0;
};

/// Observed pair on the fine grid.
struct ObservedPath {
  std::vector<double> grid;
  Eigen::MatrixXd Y, W;
};

inline ObservedPath observed(const TruthPath& p) { return {p.grid, p.Y, p.W}; }

/// Shared per-scenario precomputation for truth simulation.
class TruthSimulator {
 public:
  explicit TruthSimulator(const Scenario& s)
      : s_(s), grid_(s.fine_grid()), sampler_(s.kernel, grid_, s.method), weights_(panel_weights(s.kernel, grid_)) {
    s_.validate();
  }

  const Scenario& scenario() const { return s_; }
  const std::vector<double>& grid() const { return grid_; }

  /// Under Measure::Signal the observation carries the drift and W = W̃ + ∫b ds
  /// is the Brownian motion with Y = ∫K dW; under Measure::Reference Y is the
  /// driftless Gaussian block. The explicit left-point drift keeps Y = ∫K dW
  /// exact on the grid for the convolution sampler.
  TruthPath simulate(std::uint64_t seed, Measure m = Measure::Signal) const {
    const std::size_t dX = s_.d_X, dY = s_.d_Y, dB = s_.d_B, n = grid_.size();
    Rng rng(derive_seed(seed, 0));
    auto g = sampler_.draw(dY + dB, dY, rng, seed);
    TruthPath p;
    p.grid = grid_;
    p.seed = seed;
    // B^Y are the first d_Y rows of the Gaussian draw (driven by W̃), B^X the rest
    Eigen::MatrixXd drv(static_cast<Eigen::Index>(dB + dY), static_cast<Eigen::Index>(n));
    drv.topRows(static_cast<Eigen::Index>(dB)) = g.B.bottomRows(static_cast<Eigen::Index>(dB));
    drv.bottomRows(static_cast<Eigen::Index>(dY)) = g.B.topRows(static_cast<Eigen::Index>(dY));
    p.B = drv.topRows(static_cast<Eigen::Index>(dB));
    auto lift = lift_segmentwise(as_sampled(grid_, drv), s_.lift_level());
    auto sig = augment_with_identity(s_.sigma_field(), dY);
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dX + dY));
    z0.head(static_cast<Eigen::Index>(dX)) = s_.draw_x0(rng);
    ControlledSolution z;
    if (m == Measure::Signal) {
      z = solve_rde_volterra(lift, sig, s_.drift_field(), s_.kernel, z0, 0, s_.rde_options(), nullptr, &weights_).solution;
    } else {
      z = solve_rde(lift, sig, z0, s_.rde_options());
    }
    p.X = z.trace.topRows(static_cast<Eigen::Index>(dX));
    p.Y = z.trace.bottomRows(static_cast<Eigen::Index>(dY));
    p.W = g.W;
    p.log_lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double dt = grid_[k + 1] - grid_[k];
      const Eigen::VectorXd bk = s_.b_value(z.at(k));
      if (m == Measure::Signal) p.W.col(static_cast<Eigen::Index>(k + 1)) = p.W.col(static_cast<Eigen::Index>(k)) + (g.W.col(static_cast<Eigen::Index>(k + 1)) - g.W.col(static_cast<Eigen::Index>(k))) + bk * dt;
      const Eigen::VectorXd dW = p.W.col(static_cast<Eigen::Index>(k + 1)) - p.W.col(static_cast<Eigen::Index>(k));
      p.log_lambda(static_cast<Eigen::Index>(k + 1)) = p.log_lambda(static_cast<Eigen::Index>(k)) + bk.dot(dW) - 0.5 * bk.squaredNorm() * dt;
    }
    return p;
  }

 private:
  Scenario s_;
  std::vector<double> grid_;
  JointSampler sampler_;
  Eigen::MatrixXd weights_;
};

inline TruthPath simulate_truth(const Scenario& s, std::uint64_t seed, Measure m = Measure::Signal) {
  return TruthSimulator(s).simulate(seed, m);
}

// ---------------------------------------------------------------- weights

/// Ξ_t = ∫ b̂(Z) d𝐁̂ − ½ Σ_j ∫ b_j(Z)² ds along the hybrid lift, with b̂ active
/// only on the W columns; the Riemann part uses the trapezoid rule.
inline Eigen::VectorXd xi_rough(const Scenario& s, const LiftedPath& hybrid, const ControlledSolution& Z) {
  const std::size_t D = hybrid.dim();
  const auto& labels = hybrid.block_labels();
  if (std::count(labels.begin(), labels.end(), BlockLabel::Brownian) != static_cast<std::ptrdiff_t>(s.d_Y) || D != s.d_B + 2 * s.d_Y)
    throw std::invalid_argument("xi_rough: lift has no W block matching the observation");
  if (Z.grid != hybrid.grid()) throw std::invalid_argument("xi_rough: Z and lift grids differ");
  if (Z.dim() != s.d_X + s.d_Y) throw std::invalid_argument("xi_rough: Z must be the (X, Y) state");
  const auto form_field = registry_field(s.b, s.d_X, s.d_Y, 1, D, s.b_entries(0, s.d_B + s.d_Y, true), "b-hat");
  const auto L = compose_one_form(form_field, Z);
  const std::size_t n = Z.size();
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  double prev_b2 = s.b_value(Z.at(0)).squaredNorm();
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double next_b2 = s.b_value(Z.at(k + 1)).squaredNorm();
    const double dt = Z.grid[k + 1] - Z.grid[k];
    xi(static_cast<Eigen::Index>(k + 1)) = xi(static_cast<Eigen::Index>(k)) + rough_integral(L, hybrid, k, k + 1)(0) - 0.25 * (prev_b2 + next_b2) * dt;
    prev_b2 = next_b2;
  }
  return xi;
}

/// Solves the (X̌, Y) system against a hybrid lift of (B̄, Y, W).
inline ControlledSolution solve_decoupled(const Scenario& s, const LiftedPath& hybrid, const Eigen::VectorXd& x0) {
  auto sig = augment_with_identity(s.sigma_field(), s.d_Y, s.d_Y);
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.d_X + s.d_Y));
  z0.head(static_cast<Eigen::Index>(s.d_X)) = x0;
  return solve_rde(hybrid, sig, z0, s.rde_options());
}

// ---------------------------------------------------------------- filter

enum class EstimateKind { Unnormalized, Normalized };

inline std::string to_string(EstimateKind k) { return k == EstimateKind::Unnormalized ? "unnormalized" : "normalized"; }

struct FilterEstimate {
  double t = 0.0;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t n_samples = 0;
  double ess = 0.0;
  EstimateKind kind = EstimateKind::Unnormalized;
};

class FilterFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-sample outputs of the decoupled Monte Carlo at the evaluation times.
struct FilterSamples {
  std::vector<double> t_eval;
  std::vector<std::size_t> t_index;  ///< outer-grid indices
  Eigen::MatrixXd log_weight;        ///< n_mc × n_t (Ξ at each t)
  std::vector<Eigen::MatrixXd> X;    ///< per t: n_mc × d_X
  std::vector<char> failed;
  std::size_t failures = 0;
  std::vector<std::string> warnings;
};

struct FilterOptions {
  int threads = 0;
  double max_failure_fraction = 0.01;
  double ess_warn_fraction = 0.05;
};

/// Draws n_mc independent B̄ blocks, solves X̌ against the hybrid lift of
/// (B̄, Y, W) and records Ξ and X̌ at each evaluation time.
inline FilterSamples filter_samples(const Scenario& s, const ObservedPath& obs, std::size_t n_mc, std::uint64_t seed,
                                    const std::vector<double>& t_eval, const FilterOptions& opt = {}) {
  s.validate();
  if (n_mc < 2) throw std::invalid_argument("filter: n_mc must be at least 2");
  const auto fine = s.fine_grid();
  if (obs.grid.size() != fine.size()) throw std::invalid_argument("filter: observed path is not on the scenario's fine grid");
  for (std::size_t i = 0; i < fine.size(); ++i)
    if (std::abs(obs.grid[i] - fine[i]) > 1e-12) throw std::invalid_argument("filter: observed path is not on the scenario's fine grid");
  if (obs.Y.rows() != static_cast<Eigen::Index>(s.d_Y) || obs.W.rows() != static_cast<Eigen::Index>(s.d_Y))
    throw std::invalid_argument("filter: observed Y and W must each have d_Y rows");
  const auto outer = s.outer_grid();
  FilterSamples out;
  out.t_eval = t_eval;
  for (double t : t_eval) out.t_index.push_back(detail::grid_index(outer, t, "filter t_eval"));
  const std::size_t nt = t_eval.size();
  out.log_weight = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_mc), static_cast<Eigen::Index>(nt));
  out.X.assign(nt, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_mc), static_cast<Eigen::Index>(s.d_X)));
  out.failed.assign(n_mc, 0);
  const JointSampler sampler(s.kernel, fine, s.method);
  const int level = s.lift_level();
  parallel_for(
      n_mc,
      [&](std::size_t i) {
        Rng rng = make_rng(seed, i);
        try {
          auto bbar = sampler.draw(s.d_B, 0, rng, 0);
          const Eigen::VectorXd x0 = s.draw_x0(rng);
          auto lift = lift_joint_hybrid(fine, bbar.B, obs.Y, obs.W, level, s.inner_refine);
          auto z = solve_decoupled(s, lift, x0);
          auto xi = xi_rough(s, lift, z);
          for (std::size_t t = 0; t < nt; ++t) {
            const auto k = static_cast<Eigen::Index>(out.t_index[t]);
            if (!std::isfinite(xi(k))) throw std::runtime_error("non-finite weight");
            out.log_weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = xi(k);
            out.X[t].row(static_cast<Eigen::Index>(i)) = z.trace.col(k).head(static_cast<Eigen::Index>(s.d_X)).transpose();
          }
        } catch (const std::runtime_error&) {
          out.failed[i] = 1;
        }
      },
      opt.threads);
  out.failures = static_cast<std::size_t>(std::count(out.failed.begin(), out.failed.end(), 1));
  if (static_cast<double>(out.failures) > opt.max_failure_fraction * static_cast<double>(n_mc))
    throw FilterFailure("filter: " + std::to_string(out.failures) + " of " + std::to_string(n_mc) + " samples failed (limit " +
                        std::to_string(opt.max_failure_fraction * 100) + "%)");
  return out;
}

namespace detail {

struct ShiftedWeights {
  std::vector<double> w;  ///< exp(Ξ − M) for successful samples
  std::vector<std::size_t> idx;
  double shift = 0.0;
};

inline ShiftedWeights shifted_weights(const FilterSamples& fs, std::size_t t) {
  ShiftedWeights r;
  r.shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fs.failed.size(); ++i)
    if (!fs.failed[i]) r.shift = std::max(r.shift, fs.log_weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)));
  for (std::size_t i = 0; i < fs.failed.size(); ++i) {
    if (fs.failed[i]) continue;
    r.idx.push_back(i);
    r.w.push_back(std::exp(fs.log_weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) - r.shift));
  }
  return r;
}

}  // namespace detail

/// g^φ_t = mean of φ(X̌_t)·exp(Ξ_t), reported on the natural scale.
inline std::vector<FilterEstimate> unnormalized_estimates(const FilterSamples& fs, const TestFunction& phi, std::vector<std::string>* warnings = nullptr,
                                                          double ess_warn_fraction = 0.05) {
  std::vector<FilterEstimate> out;
  for (std::size_t t = 0; t < fs.t_eval.size(); ++t) {
    auto sw = detail::shifted_weights(fs, t);
    std::vector<double> v(sw.w.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = phi(fs.X[t].row(static_cast<Eigen::Index>(sw.idx[j])).transpose()) * sw.w[j];
    auto ms = mean_stderr(v);
    const double scale = std::exp(sw.shift);
    FilterEstimate e;
    e.t = fs.t_eval[t];
    e.value = ms.mean * scale;
    e.stderr_ = ms.stderr_ * scale;
    e.n_samples = sw.w.size();
    e.ess = effective_sample_size(sw.w);
    e.kind = EstimateKind::Unnormalized;
    if (warnings && e.ess < ess_warn_fraction * static_cast<double>(e.n_samples))
      warnings->push_back("low effective sample size " + std::to_string(e.ess) + " at t = " + std::to_string(e.t));
    out.push_back(e);
  }
  return out;
}

/// ξ_t(φ) = g^φ_t / g^1_t on shared samples, with a delta-method standard error.
inline std::vector<FilterEstimate> normalized_estimates(const FilterSamples& fs, const TestFunction& phi, std::vector<std::string>* warnings = nullptr,
                                                        double ess_warn_fraction = 0.05) {
  std::vector<FilterEstimate> out;
  for (std::size_t t = 0; t < fs.t_eval.size(); ++t) {
    auto sw = detail::shifted_weights(fs, t);
    const std::size_t n = sw.w.size();
    auto m1 = mean_stderr(sw.w);
    if (!(m1.mean > 2.0 * m1.stderr_))
      throw FilterFailure("normalized filter refused at t = " + std::to_string(fs.t_eval[t]) + ": g^1 is within 2 standard errors of zero");
    std::vector<double> fw(n);
    for (std::size_t j = 0; j < n; ++j) fw[j] = phi(fs.X[t].row(static_cast<Eigen::Index>(sw.idx[j])).transpose()) * sw.w[j];
    const double r = pairwise_sum(fw) / pairwise_sum(sw.w);
    std::vector<double> resid(n);
    for (std::size_t j = 0; j < n; ++j) resid[j] = fw[j] - r * sw.w[j];
    auto mr = mean_stderr(resid);
    FilterEstimate e;
    e.t = fs.t_eval[t];
    e.value = r;
    e.stderr_ = mr.stderr_ / m1.mean;
    e.n_samples = n;
    e.ess = effective_sample_size(sw.w);
    e.kind = EstimateKind::Normalized;
    if (warnings && e.ess < ess_warn_fraction * static_cast<double>(n))
      warnings->push_back("low effective sample size " + std::to_string(e.ess) + " at t = " + std::to_string(e.t));
    out.push_back(e);
  }
  return out;
}

inline std::vector<FilterEstimate> robust_filter(const Scenario& s, const ObservedPath& obs, std::size_t n_mc, std::uint64_t seed,
                                                 const std::vector<double>& t_eval, const FilterOptions& opt = {}) {
  auto fs = filter_samples(s, obs, n_mc, seed, t_eval, opt);
  return unnormalized_estimates(fs, s.phi);
}

inline std::vector<FilterEstimate> normalized_filter(const Scenario& s, const ObservedPath& obs, std::size_t n_mc, std::uint64_t seed,
                                                     const std::vector<double>& t_eval, const FilterOptions& opt = {}) {
  auto fs = filter_samples(s, obs, n_mc, seed, t_eval, opt);
  return normalized_estimates(fs, s.phi);
}

/// Weighted KDE of coordinate `coord` of X̌ at evaluation slot t (unnormalized: mass g^1 / e^{shift}·e^{shift}).
inline std::vector<double> filter_density(const FilterSamples& fs, std::size_t t, std::size_t coord, std::span<const double> x_grid,
                                          double bandwidth = 0.0) {
  auto sw = detail::shifted_weights(fs, t);
  std::vector<double> x(sw.w.size()), w(sw.w.size());
  const double scale = std::exp(sw.shift) / static_cast<double>(sw.w.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    x[j] = fs.X[t](static_cast<Eigen::Index>(sw.idx[j]), static_cast<Eigen::Index>(coord));
    w[j] = sw.w[j] * scale;
  }
  if (bandwidth <= 0.0) bandwidth = silverman_bandwidth(x, w);
  return density_kde(x, w, bandwidth, x_grid);
}

// ---------------------------------------------------------------- oracles and perturbations

struct KalmanBucyResult {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> var;
};

/// dX = σ dB, dY = βX dt + dW, X_0 ~ N(m0, P0): dm = Pβ(dY − βm dt),
/// dP/dt = σ² − β²P² (P integrated with RK4, m with the midpoint gain).
inline KalmanBucyResult kalman_bucy(const std::vector<double>& grid, const Eigen::RowVectorXd& Y, double m0, double P0, double sigma, double beta) {
  if (Y.size() != static_cast<Eigen::Index>(grid.size())) throw std::invalid_argument("kalman_bucy: observation/grid mismatch");
  KalmanBucyResult r;
  r.grid = grid;
  r.mean.push_back(m0);
  r.var.push_back(P0);
  auto f = [&](double P) { return sigma * sigma - beta * beta * P * P; };
  double m = m0, P = P0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = grid[k + 1] - grid[k];
    const double k1 = f(P), k2 = f(P + 0.5 * h * k1), k3 = f(P + 0.5 * h * k2), k4 = f(P + h * k3);
    const double Pn = P + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    const double Pm = P + 0.5 * h * k2;
    const double dY = Y(static_cast<Eigen::Index>(k + 1)) - Y(static_cast<Eigen::Index>(k));
    // exact for the linear dm equation with frozen gain over the step
    const double a = Pm * beta * beta;
    const double decay = std::exp(-a * h);
    m = m * decay + (a > 0 ? (1.0 - decay) / (a * h) : 1.0) * Pm * beta * dY;
    P = Pn;
    r.mean.push_back(m);
    r.var.push_back(P);
  }
  return r;
}

/// Cameron–Martin shift of the observed pair along h(t) = δ·t in every
/// component: W + h and Y + ∫K(t, s) h'(s) ds.
inline ObservedPath cameron_martin_shift(const ObservedPath& obs, const VolterraKernel& k, double delta) {
  ObservedPath out = obs;
  for (std::size_t i = 0; i < obs.grid.size(); ++i) {
    const double t = obs.grid[i];
    const double ky = k.cross_covariance(t, 0.0, t);
    for (Eigen::Index r = 0; r < obs.Y.rows(); ++r) {
      out.W(r, static_cast<Eigen::Index>(i)) += delta * t;
      out.Y(r, static_cast<Eigen::Index>(i)) += delta * ky;
    }
  }
  return out;
}

// ---------------------------------------------------------------- trapezoid conversion

struct TrapezoidResult {
  double tr_sum = 0.0;
  double rough_value = 0.0;
  double young_correction = 0.0;
  double defect = 0.0;
};

/// Trapezoid sums Σ ½(L_k + L_{k+1})·ΔX against the lift's first level, the
/// rough integral against the hybrid lift, and the correction
/// ½ Σ_i ∫ (L')^{W_i}_{Y_i} dR̂(s) with R̂(s) = E[Y_s W_s].
inline TrapezoidResult trapezoid_check(const ControlledOneForm& L, const LiftedPath& hybrid, const VolterraKernel& k, std::size_t d_B,
                                       std::size_t d_Y) {
  if (L.grid != hybrid.grid()) throw std::invalid_argument("trapezoid_check: integrand and lift grids differ");
  if (L.rows != 1) throw std::invalid_argument("trapezoid_check: scalar one-form required");
  const std::size_t D = hybrid.dim();
  if (D != d_B + 2 * d_Y || L.D != D) throw std::invalid_argument("trapezoid_check: lift is not a (B, Y, W) hybrid lift");
  TrapezoidResult r;
  const std::size_t n = L.grid.size();
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const auto& g = hybrid.increments()[j];
    for (std::size_t a = 0; a < D; ++a) r.tr_sum += 0.5 * (L.value[j](0, static_cast<Eigen::Index>(a)) + L.value[j + 1](0, static_cast<Eigen::Index>(a))) * g.l1(a);
  }
  r.rough_value = rough_integral(L, hybrid, 0, n - 1)(0);
  std::vector<Eigen::VectorXd> rhat(n);
  for (std::size_t j = 0; j < n; ++j) rhat[j] = Eigen::VectorXd::Constant(1, k.cross_covariance(L.grid[j], 0.0, L.grid[j]));
  const SampledFunction1D R(L.grid, rhat);
  for (std::size_t i = 0; i < d_Y; ++i) {
    const std::size_t a = d_B + d_Y + i, b = d_B + i;
    std::vector<Eigen::VectorXd> lp(n);
    for (std::size_t j = 0; j < n; ++j) lp[j] = Eigen::VectorXd::Constant(1, L.deriv1[j](0, static_cast<Eigen::Index>(a * D + b)));
    r.young_correction += 0.5 * young_integral_1d(SampledFunction1D(L.grid, lp), R);
  }
  r.defect = r.tr_sum - r.rough_value - r.young_correction;
  return r;
}

inline TrapezoidResult trapezoid_check(const ControlledSolution& L, const LiftedPath& hybrid, const VolterraKernel& k, std::size_t d_B,
                                       std::size_t d_Y) {
  return trapezoid_check(as_one_form(L), hybrid, k, d_B, d_Y);
}

}  // namespace roughfilter
