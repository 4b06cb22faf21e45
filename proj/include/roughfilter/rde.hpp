#pragma once

// Controlled paths, compensated rough integrals and RDE stepping (third-order
// increment expansion), with an optional Volterra memory drift and the
// Jacobian flow.

#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rough_lift.hpp"
#include "volterra.hpp"

namespace roughfilter {

/// Smooth matrix-valued field f : R^state -> R^{rows × cols}.
///
/// jacobian(y)[c](i, k) = ∂_k f_{ic}(y); hessian(y)[c][i](k, l) = ∂_k ∂_l f_{ic}(y).
/// Missing derivatives fall back to central finite differences (flagged).
struct VectorField {
  using Eval = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
  using Jac = std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)>;
  using Hess = std::function<std::vector<std::vector<Eigen::MatrixXd>>(const Eigen::VectorXd&)>;

  std::size_t state_dim = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Eval eval;
  Jac jac;
  Hess hess;
  int smoothness = 3;
  std::string name = "field";

  bool finite_difference_jacobian() const { return !jac; }
  bool finite_difference_hessian() const { return !hess; }

  Eigen::MatrixXd evaluate(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd m = eval(y);
    if (m.rows() != static_cast<Eigen::Index>(rows) || m.cols() != static_cast<Eigen::Index>(cols))
      throw std::runtime_error("VectorField '" + name + "': evaluate returned wrong shape");
    return m;
  }

  std::vector<Eigen::MatrixXd> jacobian(const Eigen::VectorXd& y) const {
    if (jac) return jac(y);
    return fd_jacobian(y);
  }

  std::vector<std::vector<Eigen::MatrixXd>> hessian(const Eigen::VectorXd& y) const {
    if (hess) return hess(y);
    // central differences of the Jacobian
    const double h = 1e-4 * (1.0 + y.norm());
    std::vector<std::vector<Eigen::MatrixXd>> H(cols, std::vector<Eigen::MatrixXd>(rows, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(state_dim), static_cast<Eigen::Index>(state_dim))));
    for (std::size_t l = 0; l < state_dim; ++l) {
      Eigen::VectorXd yp = y, ym = y;
      yp(static_cast<Eigen::Index>(l)) += h;
      ym(static_cast<Eigen::Index>(l)) -= h;
      auto jp = jacobian(yp), jm = jacobian(ym);
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t k = 0; k < state_dim; ++k)
            H[c][i](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) =
                (jp[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - jm[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) / (2 * h);
    }
    for (auto& hc : H)
      for (auto& m : hc) m = 0.5 * (m + m.transpose()).eval();
    return H;
  }

  std::vector<Eigen::MatrixXd> fd_jacobian(const Eigen::VectorXd& y) const {
    const double h = 1e-5 * (1.0 + y.norm());
    std::vector<Eigen::MatrixXd> J(cols, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(state_dim)));
    for (std::size_t k = 0; k < state_dim; ++k) {
      Eigen::VectorXd yp = y, ym = y;
      yp(static_cast<Eigen::Index>(k)) += h;
      ym(static_cast<Eigen::Index>(k)) -= h;
      Eigen::MatrixXd d = (evaluate(yp) - evaluate(ym)) / (2 * h);
      for (std::size_t c = 0; c < cols; ++c) J[c].col(static_cast<Eigen::Index>(k)) = d.col(static_cast<Eigen::Index>(c));
    }
    return J;
  }
};

/// Field with every entry zero.
inline VectorField zero_field(std::size_t state_dim, std::size_t rows, std::size_t cols) {
  VectorField f;
  f.state_dim = state_dim;
  f.rows = rows;
  f.cols = cols;
  f.name = "zero";
  f.eval = [rows, cols](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)); };
  f.jac = [=](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(cols, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(state_dim)));
  };
  f.hess = [=](const Eigen::VectorXd&) {
    return std::vector<std::vector<Eigen::MatrixXd>>(
        cols, std::vector<Eigen::MatrixXd>(rows, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(state_dim), static_cast<Eigen::Index>(state_dim))));
  };
  return f;
}

/// Constant field f ≡ M.
inline VectorField constant_field(const Eigen::MatrixXd& M, std::size_t state_dim) {
  VectorField f = zero_field(state_dim, static_cast<std::size_t>(M.rows()), static_cast<std::size_t>(M.cols()));
  f.name = "constant";
  f.eval = [M](const Eigen::VectorXd&) { return M; };
  return f;
}

/// Linear field f_{ic}(y) = Σ_k A_c(i, k) y_k.
inline VectorField linear_field(std::vector<Eigen::MatrixXd> A) {
  VectorField f;
  f.cols = A.size();
  f.rows = static_cast<std::size_t>(A.front().rows());
  f.state_dim = static_cast<std::size_t>(A.front().cols());
  f.name = "linear";
  const std::size_t rows = f.rows, cols = f.cols, sd = f.state_dim;
  f.eval = [A, rows, cols](const Eigen::VectorXd& y) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t c = 0; c < cols; ++c) m.col(static_cast<Eigen::Index>(c)) = A[c] * y;
    return m;
  };
  f.jac = [A](const Eigen::VectorXd&) { return A; };
  f.hess = [rows, cols, sd](const Eigen::VectorXd&) {
    return std::vector<std::vector<Eigen::MatrixXd>>(
        cols, std::vector<Eigen::MatrixXd>(rows, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sd), static_cast<Eigen::Index>(sd))));
  };
  return f;
}

/// Block-diagonal σ̂(z) = diag(σ(z), I_{d_Y}) acting on z = (x, y) ∈ R^{d_X + d_Y},
/// followed by `extra_cols` zero columns (e.g. the W block of a hybrid lift).
inline VectorField augment_with_identity(const VectorField& sigma, std::size_t d_Y, std::size_t extra_cols = 0) {
  const std::size_t dX = sigma.rows, dB = sigma.cols, sd = sigma.state_dim;
  if (sd != dX + d_Y) throw std::invalid_argument("augment_with_identity: sigma state must be (x, y)");
  VectorField f;
  f.state_dim = sd;
  f.rows = sd;
  f.cols = dB + d_Y + extra_cols;
  f.smoothness = sigma.smoothness;
  f.name = sigma.name + "+identity";
  const auto R = static_cast<Eigen::Index>(f.rows), C = static_cast<Eigen::Index>(f.cols), S = static_cast<Eigen::Index>(sd);
  f.eval = [sigma, dX, dB, d_Y, R, C](const Eigen::VectorXd& z) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(R, C);
    m.topLeftCorner(static_cast<Eigen::Index>(dX), static_cast<Eigen::Index>(dB)) = sigma.evaluate(z);
    for (std::size_t j = 0; j < d_Y; ++j) m(static_cast<Eigen::Index>(dX + j), static_cast<Eigen::Index>(dB + j)) = 1.0;
    return m;
  };
  f.jac = [sigma, dX, dB, R, C, S](const Eigen::VectorXd& z) {
    std::vector<Eigen::MatrixXd> J(static_cast<std::size_t>(C), Eigen::MatrixXd::Zero(R, S));
    auto js = sigma.jacobian(z);
    for (std::size_t c = 0; c < dB; ++c) J[c].topRows(static_cast<Eigen::Index>(dX)) = js[c];
    return J;
  };
  f.hess = [sigma, dX, dB, R, C, S](const Eigen::VectorXd& z) {
    std::vector<std::vector<Eigen::MatrixXd>> H(static_cast<std::size_t>(C), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(R), Eigen::MatrixXd::Zero(S, S)));
    auto hs = sigma.hessian(z);
    for (std::size_t c = 0; c < dB; ++c)
      for (std::size_t i = 0; i < dX; ++i) H[c][i] = hs[c][i];
    return H;
  };
  return f;
}

/// Solution of an RDE on a lift's grid, with its Gubinelli derivatives.
struct ControlledSolution {
  std::vector<double> grid;
  Eigen::MatrixXd trace;             ///< d_out × n
  std::vector<Eigen::MatrixXd> gub1; ///< per point, d_out × D
  std::vector<Eigen::MatrixXd> gub2; ///< per point, d_out × D², column b*D + c; empty below level 3
  std::size_t driver_dim = 0;

  std::size_t size() const { return grid.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(trace.rows()); }
  Eigen::VectorXd at(std::size_t k) const { return trace.col(static_cast<Eigen::Index>(k)); }
};

/// A controlled path interpreted as a one-form integrand L_s ∈ L(R^D, R^rows):
/// value[k](r, a), deriv1[k](r, a*D + b) = (L')^a_b, deriv2[k](r, (a*D + b)*D + c) = (L'')^a_{bc}.
struct ControlledOneForm {
  std::vector<double> grid;
  std::size_t rows = 0;
  std::size_t D = 0;
  std::vector<Eigen::MatrixXd> value;
  std::vector<Eigen::MatrixXd> deriv1;
  std::vector<Eigen::MatrixXd> deriv2;
};

/// The driver's own level-1 path as a controlled path (Z' = identity).
inline ControlledSolution controlled_driver(const LiftedPath& lift) {
  ControlledSolution z;
  z.grid = lift.grid();
  z.trace = lift.level1_path();
  z.driver_dim = lift.dim();
  const auto D = static_cast<Eigen::Index>(lift.dim());
  z.gub1.assign(z.grid.size(), Eigen::MatrixXd::Identity(D, D));
  if (lift.level() >= 3) z.gub2.assign(z.grid.size(), Eigen::MatrixXd::Zero(D, D * D));
  return z;
}

/// Z viewed as a one-form with a single row: L^a = Z^a (requires dim(Z) = D).
inline ControlledOneForm as_one_form(const ControlledSolution& z) {
  if (z.dim() != z.driver_dim) throw std::invalid_argument("as_one_form: state dimension must equal driver dimension");
  const std::size_t D = z.driver_dim;
  ControlledOneForm f;
  f.grid = z.grid;
  f.rows = 1;
  f.D = D;
  for (std::size_t k = 0; k < z.size(); ++k) {
    f.value.push_back(z.trace.col(static_cast<Eigen::Index>(k)).transpose());
    Eigen::MatrixXd d1(1, static_cast<Eigen::Index>(D * D));
    for (std::size_t a = 0; a < D; ++a)
      for (std::size_t b = 0; b < D; ++b) d1(0, static_cast<Eigen::Index>(a * D + b)) = z.gub1[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    f.deriv1.push_back(d1);
    if (!z.gub2.empty()) {
      Eigen::MatrixXd d2(1, static_cast<Eigen::Index>(D * D * D));
      for (std::size_t a = 0; a < D; ++a)
        for (std::size_t bc = 0; bc < D * D; ++bc) d2(0, static_cast<Eigen::Index>(a * D * D + bc)) = z.gub2[k](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(bc));
      f.deriv2.push_back(d2);
    }
  }
  return f;
}

/// One-form f(Z) for a field f : R^{dim Z} -> R^{rows × D}, by the chain rule:
/// (L')^a_b = ∇f_a · Z'_b and (L'')^a_{bc} = ∇f_a · Z''_{bc} + ∇²f_a[Z'_b, Z'_c].
inline ControlledOneForm compose_one_form(const VectorField& f, const ControlledSolution& z) {
  if (f.state_dim != z.dim()) throw std::invalid_argument("compose_one_form: field state dimension mismatch");
  if (f.cols != z.driver_dim) throw std::invalid_argument("compose_one_form: field columns must match the driver dimension");
  const std::size_t D = z.driver_dim, R = f.rows;
  const bool lvl3 = !z.gub2.empty();
  ControlledOneForm L;
  L.grid = z.grid;
  L.rows = R;
  L.D = D;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const Eigen::VectorXd y = z.at(k);
    L.value.push_back(f.evaluate(y));
    const auto J = f.jacobian(y);  // J[a] : R × state
    Eigen::MatrixXd d1(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(D * D));
    for (std::size_t a = 0; a < D; ++a) {
      Eigen::MatrixXd JZ = J[a] * z.gub1[k];  // R × D
      for (std::size_t b = 0; b < D; ++b) d1.col(static_cast<Eigen::Index>(a * D + b)) = JZ.col(static_cast<Eigen::Index>(b));
    }
    L.deriv1.push_back(std::move(d1));
    if (lvl3) {
      const auto H = f.hessian(y);
      Eigen::MatrixXd d2(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(D * D * D));
      for (std::size_t a = 0; a < D; ++a) {
        Eigen::MatrixXd JZ2 = J[a] * z.gub2[k];  // R × D²
        for (std::size_t r = 0; r < R; ++r) {
          Eigen::MatrixXd Q = z.gub1[k].transpose() * H[a][r] * z.gub1[k];  // D × D
          for (std::size_t b = 0; b < D; ++b)
            for (std::size_t c = 0; c < D; ++c)
              d2(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>((a * D + b) * D + c)) =
                  JZ2(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b * D + c)) + Q(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c));
        }
      }
      L.deriv2.push_back(std::move(d2));
    }
  }
  return L;
}

/// Compensated Riemann sum Σ_k [L^a X^a + (L')^a_b X^{ba} + (L'')^a_{bc} X^{bca}] over grid indices [i0, i1].
inline Eigen::VectorXd rough_integral(const ControlledOneForm& L, const LiftedPath& lift, std::size_t i0, std::size_t i1) {
  if (L.grid != lift.grid()) throw std::invalid_argument("rough_integral: integrand and driver grids differ");
  if (L.D != lift.dim()) throw std::invalid_argument("rough_integral: integrand and driver dimensions differ");
  if (i0 > i1 || i1 > lift.intervals()) throw std::invalid_argument("rough_integral: interval outside the grid");
  const std::size_t D = L.D;
  const bool lvl3 = lift.level() >= 3 && !L.deriv2.empty();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.rows));
  for (std::size_t k = i0; k < i1; ++k) {
    const auto& g = lift.increments()[k];
    for (std::size_t a = 0; a < D; ++a) {
      acc += L.value[k].col(static_cast<Eigen::Index>(a)) * g.l1(a);
      if (lift.level() >= 2)
        for (std::size_t b = 0; b < D; ++b) acc += L.deriv1[k].col(static_cast<Eigen::Index>(a * D + b)) * g.l2(b, a);
      if (lvl3)
        for (std::size_t b = 0; b < D; ++b)
          for (std::size_t c = 0; c < D; ++c) acc += L.deriv2[k].col(static_cast<Eigen::Index>((a * D + b) * D + c)) * g.l3(b, c, a);
    }
  }
  return acc;
}

inline Eigen::VectorXd rough_integral(const ControlledOneForm& L, const LiftedPath& lift, double t0, double t1) {
  return rough_integral(L, lift, lift.grid_index(t0), lift.grid_index(t1));
}

/// ∫ Z dX with Z read as a single-row one-form.
inline Eigen::VectorXd rough_integral(const ControlledSolution& z, const LiftedPath& lift, double t0, double t1) {
  if (z.grid != lift.grid()) throw std::invalid_argument("rough_integral: controlled path and driver grids differ");
  return rough_integral(as_one_form(z), lift, t0, t1);
}

struct RdeOptions {
  double blowup_bound = 1e8;
  /// Markovian left-point drift y += f(y)Δt with f : R^d -> R^{d×1}; used for
  /// the Brownian-kernel reduction of the Volterra solver.
  std::optional<VectorField> euler_drift;
};

class RdeBlowup : public std::runtime_error {
 public:
  RdeBlowup(std::size_t step, double t, const std::string& what) : std::runtime_error(what), step_(step), t_(t) {}
  std::size_t step() const { return step_; }
  double time() const { return t_; }

 private:
  std::size_t step_;
  double t_;
};

namespace detail {

struct StepTerms {
  Eigen::VectorXd increment;
  Eigen::MatrixXd gub1;
  Eigen::MatrixXd gub2;
};

/// y_{s,t} ≈ σ_c X^c + (∇σ_c σ_b) X^{bc} + (∇(∇σ_d σ_c) σ_b) X^{bcd}.
inline StepTerms rde_step(const VectorField& sigma, const Eigen::VectorXd& y, const GroupIncrement& g, bool keep_gub2) {
  const std::size_t D = sigma.cols, d = sigma.rows;
  StepTerms out;
  out.gub1 = sigma.evaluate(y);
  out.increment = out.gub1 * Eigen::Map<const Eigen::VectorXd>(g.raw().data(), static_cast<Eigen::Index>(D));
  const int level = g.level();
  if (level < 2 && !keep_gub2) return out;
  const auto J = sigma.jacobian(y);
  Eigen::MatrixXd V2(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(D * D));
  for (std::size_t b = 0; b < D; ++b)
    for (std::size_t c = 0; c < D; ++c) V2.col(static_cast<Eigen::Index>(b * D + c)) = J[c] * out.gub1.col(static_cast<Eigen::Index>(b));
  if (level >= 2)
    for (std::size_t b = 0; b < D; ++b)
      for (std::size_t c = 0; c < D; ++c)
        if (const double x = g.l2(b, c); x != 0.0) out.increment += V2.col(static_cast<Eigen::Index>(b * D + c)) * x;
  if (level >= 3) {
    const auto H = sigma.hessian(y);
    for (std::size_t dd = 0; dd < D; ++dd) {
      for (std::size_t c = 0; c < D; ++c) {
        const Eigen::VectorXd sc = out.gub1.col(static_cast<Eigen::Index>(c));
        for (std::size_t b = 0; b < D; ++b) {
          const double x = g.l3(b, c, dd);
          if (x == 0.0) continue;
          const Eigen::VectorXd sb = out.gub1.col(static_cast<Eigen::Index>(b));
          Eigen::VectorXd v = J[dd] * (J[c] * sb);
          for (std::size_t i = 0; i < d; ++i) v(static_cast<Eigen::Index>(i)) += sc.dot(H[dd][i] * sb);
          out.increment += v * x;
        }
      }
    }
  }
  if (keep_gub2) out.gub2 = std::move(V2);
  return out;
}

inline void check_state(const Eigen::VectorXd& y, double bound, std::size_t step, double t) {
  if (!y.allFinite() || y.cwiseAbs().maxCoeff() > bound) {
    throw RdeBlowup(step, t, "RDE state exceeded bound " + std::to_string(bound) + " at step " + std::to_string(step) + " (t = " + std::to_string(t) + ")");
  }
}

inline void check_field_shape(const VectorField& sigma, const LiftedPath& lift, std::size_t y_dim) {
  if (sigma.cols != lift.dim()) throw std::invalid_argument("solve_rde: field columns (" + std::to_string(sigma.cols) + ") must equal driver dimension (" + std::to_string(lift.dim()) + ")");
  if (sigma.rows != y_dim || sigma.state_dim != y_dim) throw std::invalid_argument("solve_rde: field shape does not match the state dimension");
  if (sigma.smoothness < lift.level()) throw std::invalid_argument("solve_rde: field smoothness below the lift level");
}

}  // namespace detail

inline ControlledSolution solve_rde(const LiftedPath& lift, const VectorField& sigma, const Eigen::VectorXd& y0, const RdeOptions& opt = {}) {
  detail::check_field_shape(sigma, lift, static_cast<std::size_t>(y0.size()));
  if (!y0.allFinite()) throw std::invalid_argument("solve_rde: non-finite initial value");
  const std::size_t n = lift.grid().size();
  const bool lvl3 = lift.level() >= 3;
  ControlledSolution z;
  z.grid = lift.grid();
  z.driver_dim = lift.dim();
  z.trace.resize(y0.size(), static_cast<Eigen::Index>(n));
  z.trace.col(0) = y0;
  Eigen::VectorXd y = y0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    auto st = detail::rde_step(sigma, y, lift.increments()[k], lvl3);
    z.gub1.push_back(std::move(st.gub1));
    if (lvl3) z.gub2.push_back(std::move(st.gub2));
    Eigen::VectorXd next = y + st.increment;
    if (opt.euler_drift) next += opt.euler_drift->evaluate(y).col(0) * (z.grid[k + 1] - z.grid[k]);
    y = std::move(next);
    detail::check_state(y, opt.blowup_bound, k + 1, z.grid[k + 1]);
    z.trace.col(static_cast<Eigen::Index>(k + 1)) = y;
  }
  auto last = detail::rde_step(sigma, y, GroupIncrement(lift.dim(), lift.level()), lvl3);
  z.gub1.push_back(std::move(last.gub1));
  if (lvl3) z.gub2.push_back(std::move(last.gub2));
  return z;
}

/// Past drift values for restarting a Volterra solve: b(Z_j) at times t_0 < ... < t_s,
/// where t_s is the restart time (the first grid point of the continuation lift).
struct DriftHistory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> b_values;
};

struct VolterraSolution {
  ControlledSolution solution;
  DriftHistory history;  ///< b(Z_j) along the full time axis, for restarts
};

/// Z_t = z0 + Kb(Z)(t) + ∫σ(Z) dX. Each step adds the rough increment and
/// Kb(Z)(t_{k+1}) - Kb(Z)(t_k) = Σ_{j<=k} (w_{k+1,j} - w_{k,j}) b(Z_j), with
/// panel weights w_{k,j} = ∫_{t_j}^{t_{j+1}} K(t_k, u) du. Picard iterations
/// re-evaluate the newest panel with ½(b(Z_k) + b(Z_{k+1})).
inline VolterraSolution solve_rde_volterra(const LiftedPath& lift, const VectorField& sigma, const VectorField& b, const VolterraKernel& kernel,
                                           const Eigen::VectorXd& z0, int picard_iters, const RdeOptions& opt = {},
                                           const DriftHistory* history = nullptr, const Eigen::MatrixXd* weights = nullptr) {
  detail::check_field_shape(sigma, lift, static_cast<std::size_t>(z0.size()));
  if (b.state_dim != static_cast<std::size_t>(z0.size()) || b.rows != static_cast<std::size_t>(z0.size()) || b.cols != 1)
    throw std::invalid_argument("solve_rde_volterra: drift must map R^d to R^{d×1}");
  if (picard_iters < 0) throw std::invalid_argument("solve_rde_volterra: picard_iters must be nonnegative");
  const std::vector<double>& g = lift.grid();
  const std::size_t n = g.size();

  // full time axis: history (without its last point, which is g[0]) followed by the lift grid
  std::vector<double> axis;
  std::vector<Eigen::VectorXd> bvals;
  if (history && !history->times.empty()) {
    if (std::abs(history->times.back() - g.front()) > 1e-12) throw std::invalid_argument("solve_rde_volterra: history must end at the restart time");
    if (history->b_values.size() != history->times.size()) throw std::invalid_argument("solve_rde_volterra: malformed history");
    axis.assign(history->times.begin(), history->times.end() - 1);
    bvals.assign(history->b_values.begin(), history->b_values.end() - 1);
  } else if (g.front() != 0.0) {
    throw std::invalid_argument("solve_rde_volterra: grid must start at 0 without a history");
  }
  const std::size_t off = axis.size();
  axis.insert(axis.end(), g.begin(), g.end());
  Eigen::MatrixXd wlocal;
  if (!weights) {
    wlocal = panel_weights(kernel, axis);
    weights = &wlocal;
  }
  if (weights->rows() != static_cast<Eigen::Index>(axis.size())) throw std::invalid_argument("solve_rde_volterra: weight matrix does not match the grid");
  const Eigen::MatrixXd& w = *weights;

  const bool lvl3 = lift.level() >= 3;
  VolterraSolution out;
  ControlledSolution& z = out.solution;
  z.grid = g;
  z.driver_dim = lift.dim();
  z.trace.resize(z0.size(), static_cast<Eigen::Index>(n));
  z.trace.col(0) = z0;
  Eigen::VectorXd y = z0;
  bvals.push_back(b.evaluate(y).col(0));
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t K = off + k;  // index on the full axis
    auto st = detail::rde_step(sigma, y, lift.increments()[k], lvl3);
    Eigen::VectorXd drift = Eigen::VectorXd::Zero(y.size());
    for (std::size_t j = 0; j < K; ++j)
      drift += (w(static_cast<Eigen::Index>(K + 1), static_cast<Eigen::Index>(j)) - w(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(j))) * bvals[j];
    const double w_new = w(static_cast<Eigen::Index>(K + 1), static_cast<Eigen::Index>(K));
    Eigen::VectorXd next = y + st.increment + drift + w_new * bvals[K];
    for (int it = 0; it < picard_iters; ++it) {
      const Eigen::VectorXd b_next = b.evaluate(next).col(0);
      next = y + st.increment + drift + w_new * 0.5 * (bvals[K] + b_next);
    }
    if (opt.euler_drift) next += opt.euler_drift->evaluate(y).col(0) * (g[k + 1] - g[k]);
    detail::check_state(next, opt.blowup_bound, k + 1, g[k + 1]);
    z.gub1.push_back(std::move(st.gub1));
    if (lvl3) z.gub2.push_back(std::move(st.gub2));
    y = std::move(next);
    z.trace.col(static_cast<Eigen::Index>(k + 1)) = y;
    bvals.push_back(b.evaluate(y).col(0));
  }
  auto last = detail::rde_step(sigma, y, GroupIncrement(lift.dim(), lift.level()), lvl3);
  z.gub1.push_back(std::move(last.gub1));
  if (lvl3) z.gub2.push_back(std::move(last.gub2));
  out.history.times = axis;
  out.history.b_values = std::move(bvals);
  return out;
}

/// Restriction of a lift to grid indices [a, b].
inline LiftedPath sublift(const LiftedPath& lift, std::size_t a, std::size_t b) {
  if (a >= b || b > lift.intervals()) throw std::invalid_argument("sublift: bad index range");
  std::vector<double> grid(lift.grid().begin() + static_cast<std::ptrdiff_t>(a), lift.grid().begin() + static_cast<std::ptrdiff_t>(b) + 1);
  std::vector<GroupIncrement> inc(lift.increments().begin() + static_cast<std::ptrdiff_t>(a), lift.increments().begin() + static_cast<std::ptrdiff_t>(b));
  return LiftedPath(std::move(grid), std::move(inc), lift.mode(), lift.block_labels());
}

/// Jacobian flow dJ = ∇σ(Z) J dX, J_0 = I, solved jointly with Z as the
/// augmented RDE for (Z, vec J). Returns J as a d × d·n trace (column-major blocks)
/// packed into ControlledSolution::trace with d² rows (vec J, column major).
inline ControlledSolution solve_jacobian(const LiftedPath& lift, const VectorField& sigma, const ControlledSolution& Z, const RdeOptions& opt = {}) {
  if (Z.grid != lift.grid()) throw std::invalid_argument("solve_jacobian: Z and driver grids differ");
  const std::size_t d = Z.dim(), D = sigma.cols;
  const std::size_t S = d + d * d;
  VectorField F;
  F.state_dim = S;
  F.rows = S;
  F.cols = D;
  F.smoothness = sigma.smoothness;
  F.name = "jacobian-flow";
  const auto di = static_cast<Eigen::Index>(d);
  F.eval = [sigma, d, D, S, di](const Eigen::VectorXd& u) {
    const Eigen::VectorXd y = u.head(di);
    const Eigen::Map<const Eigen::MatrixXd> J(u.data() + d, di, di);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(D));
    out.topRows(di) = sigma.evaluate(y);
    const auto G = sigma.jacobian(y);
    for (std::size_t c = 0; c < D; ++c) {
      Eigen::MatrixXd GJ = G[c] * J;
      out.col(static_cast<Eigen::Index>(c)).tail(di * di) = Eigen::Map<Eigen::VectorXd>(GJ.data(), di * di);
    }
    return out;
  };
  // ∂F_c/∂u: [∇σ_c, 0; ∂(∇σ_c J)/∂y, I ⊗ ∇σ_c]
  F.jac = [sigma, d, D, S, di](const Eigen::VectorXd& u) {
    const Eigen::VectorXd y = u.head(di);
    const Eigen::Map<const Eigen::MatrixXd> J(u.data() + d, di, di);
    const auto G = sigma.jacobian(y);
    const auto H = sigma.hessian(y);
    std::vector<Eigen::MatrixXd> out(D, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S)));
    for (std::size_t c = 0; c < D; ++c) {
      out[c].topLeftCorner(di, di) = G[c];
      for (std::size_t col = 0; col < d; ++col) {
        // rows of vec(G_c J) for column `col` of J: G_c J(:, col)
        const auto r0 = static_cast<Eigen::Index>(d + col * d);
        out[c].block(r0, static_cast<Eigen::Index>(d + col * d), di, di) = G[c];
        for (std::size_t i = 0; i < d; ++i)
          out[c].block(r0 + static_cast<Eigen::Index>(i), 0, 1, di) = (H[c][i] * J.col(static_cast<Eigen::Index>(col))).transpose();
      }
    }
    return out;
  };
  Eigen::VectorXd u0(static_cast<Eigen::Index>(S));
  u0.head(di) = Z.at(0);
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(di, di);
  u0.tail(di * di) = Eigen::Map<Eigen::VectorXd>(I.data(), di * di);
  auto aug = solve_rde(lift, F, u0, opt);
  ControlledSolution J;
  J.grid = aug.grid;
  J.driver_dim = D;
  J.trace = aug.trace.bottomRows(di * di);
  for (auto& m : aug.gub1) J.gub1.push_back(m.bottomRows(di * di));
  for (auto& m : aug.gub2) J.gub2.push_back(m.bottomRows(di * di));
  return J;
}

/// J at grid index k as a d × d matrix.
inline Eigen::MatrixXd jacobian_at(const ControlledSolution& J, std::size_t k) {
  const auto d = static_cast<Eigen::Index>(std::lround(std::sqrt(static_cast<double>(J.dim()))));
  Eigen::VectorXd v = J.trace.col(static_cast<Eigen::Index>(k));
  return Eigen::Map<Eigen::MatrixXd>(v.data(), d, d);
}

/// CSV: time, y_1..y_d [, J_11..J_dd column-major].
inline void write_solution_csv(std::ostream& os, const ControlledSolution& z, const ControlledSolution* jac = nullptr) {
  os << "time";
  for (std::size_t i = 0; i < z.dim(); ++i) os << ",y_" << i + 1;
  const std::size_t d = z.dim();
  if (jac)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t r = 0; r < d; ++r) os << ",J_" << r + 1 << c + 1;
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 0; k < z.size(); ++k) {
    os << z.grid[k];
    for (std::size_t i = 0; i < d; ++i) os << ',' << z.trace(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    if (jac)
      for (Eigen::Index r = 0; r < jac->trace.rows(); ++r) os << ',' << jac->trace(r, static_cast<Eigen::Index>(k));
    os << '\n';
  }
}

}  // namespace roughfilter
