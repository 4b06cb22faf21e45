#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "roughfilter/rde.hpp"

using namespace roughfilter;

namespace {

LiftedPath smooth_lift(std::size_t n, int level, double (*x)(double)) {
  std::vector<double> t(n + 1), v(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    t[k] = static_cast<double>(k) / static_cast<double>(n);
    v[k] = x(t[k]);
  }
  return lift_segmentwise(SampledFunction1D::scalar(t, v), level);
}

double sin_path(double t) { return std::sin(3 * t); }

VectorField sine_field() {
  // σ(y) = (sin y_1 + 0.5 y_2, 0 ; cos y_1, 1) on R^2 with driver dimension 2
  VectorField f;
  f.state_dim = 2;
  f.rows = 2;
  f.cols = 2;
  f.name = "sine";
  f.eval = [](const Eigen::VectorXd& y) {
    Eigen::MatrixXd m(2, 2);
    m << std::sin(y(0)) + 0.5 * y(1), 0.0, std::cos(y(0)), 1.0;
    return m;
  };
  return f;
}

VectorField scalar_drift(double (*b)(double)) {
  VectorField f;
  f.state_dim = 1;
  f.rows = 1;
  f.cols = 1;
  f.name = "drift";
  f.eval = [b](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, b(y(0))); };
  return f;
}

double tanh_drift(double x) { return -std::tanh(x); }

}  // namespace

TEST(VectorField, FiniteDifferenceFallbackMatchesAnalytic) {
  auto f = sine_field();
  Eigen::Vector2d y(0.3, -0.7);
  auto J = f.jacobian(y);
  EXPECT_NEAR(J[0](0, 0), std::cos(0.3), 1e-8);
  EXPECT_NEAR(J[0](0, 1), 0.5, 1e-8);
  EXPECT_NEAR(J[0](1, 0), -std::sin(0.3), 1e-8);
  auto H = f.hessian(y);
  EXPECT_NEAR(H[0][0](0, 0), -std::sin(0.3), 1e-5);
  EXPECT_NEAR(H[0][1](0, 0), -std::cos(0.3), 1e-5);
  EXPECT_TRUE(f.finite_difference_jacobian());
}

TEST(SolveRde, ZeroFieldIsConstant) {
  auto lift = smooth_lift(50, 3, sin_path);
  auto z = solve_rde(lift, zero_field(2, 2, 1), Eigen::Vector2d(1.5, -2.0));
  for (std::size_t k = 0; k < z.size(); ++k) {
    EXPECT_EQ(z.trace(0, static_cast<Eigen::Index>(k)), 1.5);
    EXPECT_EQ(z.trace(1, static_cast<Eigen::Index>(k)), -2.0);
  }
}

TEST(SolveRde, AdditiveNoiseIsExact) {
  VolterraKernel k(KernelFamily::RiemannLiouville, 0.35);
  auto s = sample_joint(k, uniform_grid(1.0, 128), 2, 0, 1, 3, SamplingMethod::Convolution, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  auto z = solve_rde(lift, constant_field(Eigen::Matrix2d::Identity(), 2), Eigen::Vector2d(1.0, 2.0));
  for (std::size_t k2 = 0; k2 < z.size(); ++k2) {
    EXPECT_NEAR(z.trace(0, static_cast<Eigen::Index>(k2)), 1.0 + s.B(0, static_cast<Eigen::Index>(k2)), 1e-12);
    EXPECT_NEAR(z.trace(1, static_cast<Eigen::Index>(k2)), 2.0 + s.B(1, static_cast<Eigen::Index>(k2)), 1e-12);
  }
}

TEST(SolveRde, LinearFieldConvergesToExponential) {
  auto field = linear_field({Eigen::MatrixXd::Identity(1, 1)});
  const double exact = 0.7 * std::exp(sin_path(1.0));
  std::vector<double> err2, err3;
  for (std::size_t n : {64u, 128u, 256u, 512u}) {
    err2.push_back(std::abs(solve_rde(smooth_lift(n, 2, sin_path), field, Eigen::VectorXd::Constant(1, 0.7)).trace(0, static_cast<Eigen::Index>(n)) - exact));
    err3.push_back(std::abs(solve_rde(smooth_lift(n, 3, sin_path), field, Eigen::VectorXd::Constant(1, 0.7)).trace(0, static_cast<Eigen::Index>(n)) - exact));
  }
  // least-squares slope of log2(error) against log2(n)
  auto slope = [](const std::vector<double>& e) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double x = static_cast<double>(i), y = -std::log2(e[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
  };
  EXPECT_GE(slope(err2), 1.8);
  EXPECT_GE(slope(err3), 2.8);
}

TEST(SolveRde, GubinelliDerivativesMatchField) {
  auto f = sine_field();
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 64), 2, 0, 1, 5, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  auto z = solve_rde(lift, f, Eigen::Vector2d(0.1, 0.2));
  ASSERT_EQ(z.gub1.size(), z.size());
  ASSERT_EQ(z.gub2.size(), z.size());
  for (std::size_t i = 0; i < z.size(); i += 9) {
    EXPECT_LT((z.gub1[i] - f.evaluate(z.at(i))).cwiseAbs().maxCoeff(), 1e-14);
    auto J = f.jacobian(z.at(i));
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        EXPECT_LT((z.gub2[i].col(static_cast<Eigen::Index>(b * 2 + c)) - J[c] * z.gub1[i].col(static_cast<Eigen::Index>(b))).norm(), 1e-12);
  }
}

TEST(SolveRde, BlowupReportsFirstStep) {
  auto lift = smooth_lift(100, 2, [](double t) { return 50 * t; });
  auto field = linear_field({Eigen::MatrixXd::Identity(1, 1)});
  RdeOptions opt;
  opt.blowup_bound = 1e6;
  try {
    solve_rde(lift, field, Eigen::VectorXd::Constant(1, 1.0), opt);
    FAIL() << "expected blow-up";
  } catch (const RdeBlowup& e) {
    // growth factor per step is 1 + 0.5 + 0.125 = 1.625
    const auto expected = static_cast<std::size_t>(std::ceil(std::log(1e6) / std::log(1.625)));
    EXPECT_EQ(e.step(), expected);
  }
}

TEST(SolveRde, ShapeChecks) {
  auto lift = smooth_lift(10, 2, sin_path);
  EXPECT_THROW(solve_rde(lift, zero_field(2, 2, 3), Eigen::Vector2d(0, 0)), std::invalid_argument);
  auto f = zero_field(1, 1, 1);
  f.smoothness = 1;
  EXPECT_THROW(solve_rde(lift, f, Eigen::VectorXd::Zero(1)), std::invalid_argument);
}

TEST(RoughIntegral, Examples) {
  // ∫_0^1 t dt along the identity path
  auto line = smooth_lift(7, 2, [](double t) { return t; });
  auto z = controlled_driver(line);
  EXPECT_NEAR(rough_integral(z, line, 0.0, 1.0)(0), 0.5, 1e-14);

  // ∫ B dB = B_T^2 / 2 for any geometric lift
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.35);
  auto s = sample_joint(k, uniform_grid(1.0, 64), 1, 0, 1, 7, SamplingMethod::Cholesky, 1).front();
  auto geo = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  const double BT = s.B(0, 64);
  EXPECT_NEAR(rough_integral(controlled_driver(geo), geo, 0.0, 1.0)(0), 0.5 * BT * BT, 1e-12);

  // mismatched grids are rejected
  EXPECT_THROW(rough_integral(z, geo, 0.0, 1.0), std::invalid_argument);
}

TEST(RoughIntegral, ItoAgainstHybridLift) {
  // Y = W at H = 1/2; ∫ Y dW against the hybrid lift is the Itô integral.
  VolterraKernel k;
  auto grid = uniform_grid(1.0, 8192);
  auto s = sample_joint(k, grid, 1, 1, 1, 19, SamplingMethod::Convolution, 1).front();
  auto lift = lift_joint_hybrid(s, {0}, 2, 64);
  VectorField f;
  f.state_dim = 2;
  f.rows = 1;
  f.cols = 2;
  f.eval = [](const Eigen::VectorXd& y) {
    Eigen::MatrixXd m(1, 2);
    m << 0.0, y(0);
    return m;
  };
  auto L = compose_one_form(f, controlled_driver(lift));
  const double WT = s.W(0, 8192);
  double qv = 0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) qv += std::pow(s.W(0, static_cast<Eigen::Index>(i + 1)) - s.W(0, static_cast<Eigen::Index>(i)), 2);
  const double ito = rough_integral(L, lift, 0.0, 1.0)(0);
  EXPECT_NEAR(ito, 0.5 * (WT * WT - qv), 1e-10);
  EXPECT_NEAR(ito, 0.5 * (WT * WT - 1.0), 0.05);
}

TEST(RoughIntegral, ComposedOneFormSecondDerivative) {
  // d(F(X)) = F'(X) dX for a geometric lift of a smooth path, F = sin.
  auto lift = smooth_lift(64, 3, sin_path);
  VectorField f;
  f.state_dim = 1;
  f.rows = 1;
  f.cols = 1;
  f.eval = [](const Eigen::VectorXd& y) { return Eigen::MatrixXd::Constant(1, 1, std::cos(y(0))); };
  f.jac = [](const Eigen::VectorXd& y) { return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Constant(1, 1, -std::sin(y(0)))}; };
  f.hess = [](const Eigen::VectorXd& y) {
    return std::vector<std::vector<Eigen::MatrixXd>>{{Eigen::MatrixXd::Constant(1, 1, -std::cos(y(0)))}};
  };
  auto L = compose_one_form(f, controlled_driver(lift));
  const double v = rough_integral(L, lift, 0.0, 1.0)(0);
  EXPECT_NEAR(v, std::sin(sin_path(1.0)), 1e-5);
}

TEST(VolterraRde, BrownianKernelReducesToMarkovian) {
  VolterraKernel k;
  auto s = sample_joint(k, uniform_grid(1.0, 256), 1, 0, 1, 29, SamplingMethod::Convolution, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 2);
  auto sigma = constant_field(Eigen::MatrixXd::Constant(1, 1, 0.8), 1);
  auto b = scalar_drift(tanh_drift);
  auto vol = solve_rde_volterra(lift, sigma, b, k, Eigen::VectorXd::Constant(1, 0.5), 0);
  RdeOptions opt;
  opt.euler_drift = b;
  auto mark = solve_rde(lift, sigma, Eigen::VectorXd::Constant(1, 0.5), opt);
  EXPECT_LE((vol.solution.trace - mark.trace).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(VolterraRde, ConstantDriftMatchesKernelIntegral) {
  VolterraKernel k(KernelFamily::RiemannLiouville, 0.3);
  auto grid = uniform_grid(1.0, 64);
  std::vector<Eigen::VectorXd> v(grid.size(), Eigen::VectorXd::Zero(1));
  auto lift = lift_segmentwise(SampledFunction1D(grid, v), 2);
  auto b = scalar_drift([](double) { return 1.0; });
  auto z = solve_rde_volterra(lift, zero_field(1, 1, 1), b, k, Eigen::VectorXd::Zero(1), 2).solution;
  for (std::size_t i : {1u, 17u, 64u}) EXPECT_NEAR(z.trace(0, static_cast<Eigen::Index>(i)), k.cross_covariance(grid[i], 0.0, grid[i]), 1e-12);
}

TEST(VolterraRde, FlowPropertyWithHistory) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto grid = uniform_grid(1.0, 64);
  auto s = sample_joint(k, grid, 1, 0, 1, 31, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 2);
  auto sigma = linear_field({Eigen::MatrixXd::Constant(1, 1, 0.3)});
  auto b = scalar_drift(tanh_drift);
  auto full = solve_rde_volterra(lift, sigma, b, k, Eigen::VectorXd::Constant(1, 1.0), 2);
  auto head = solve_rde_volterra(sublift(lift, 0, 24), sigma, b, k, Eigen::VectorXd::Constant(1, 1.0), 2);
  auto tail = solve_rde_volterra(sublift(lift, 24, 64), sigma, b, k, head.solution.at(24), 2, {}, &head.history);
  EXPECT_LE(std::abs(tail.solution.trace(0, 40) - full.solution.trace(0, 64)), 1e-9);
  EXPECT_THROW(solve_rde_volterra(sublift(lift, 24, 64), sigma, b, k, head.solution.at(24), 2), std::invalid_argument);
}

TEST(VolterraRde, PicardImprovesTrapezoidPanel) {
  // dz = Kb(z) with b(z) = -z and Brownian kernel: z' = -z.
  VolterraKernel k;
  const double exact = std::exp(-1.0);
  auto b = scalar_drift([](double x) { return -x; });
  std::vector<double> e0, e3;
  for (std::size_t n : {32u, 64u}) {
    auto grid = uniform_grid(1.0, n);
    auto lift = lift_segmentwise(SampledFunction1D(grid, std::vector<Eigen::VectorXd>(grid.size(), Eigen::VectorXd::Zero(1))), 2);
    e0.push_back(std::abs(solve_rde_volterra(lift, zero_field(1, 1, 1), b, k, Eigen::VectorXd::Ones(1), 0).solution.trace(0, static_cast<Eigen::Index>(n)) - exact));
    e3.push_back(std::abs(solve_rde_volterra(lift, zero_field(1, 1, 1), b, k, Eigen::VectorXd::Ones(1), 6).solution.trace(0, static_cast<Eigen::Index>(n)) - exact));
  }
  EXPECT_LT(e3[1], e0[1] / 10);
  EXPECT_GE(std::log2(e3[0] / e3[1]), 1.8);
}

TEST(Jacobian, LinearFieldMatchesSolutionMap) {
  std::vector<Eigen::MatrixXd> A(2);
  A[0] = (Eigen::Matrix2d() << 0.2, -0.4, 0.1, 0.3).finished();
  A[1] = (Eigen::Matrix2d() << -0.1, 0.0, 0.5, 0.2).finished();
  auto field = linear_field(A);
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 64), 2, 0, 1, 37, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  auto z = solve_rde(lift, field, Eigen::Vector2d(1.0, -1.0));
  auto J = solve_jacobian(lift, field, z);
  Eigen::Matrix2d M;
  for (int c = 0; c < 2; ++c) M.col(c) = solve_rde(lift, field, Eigen::Vector2d::Unit(c)).at(64);
  EXPECT_LT((jacobian_at(J, 64) - M).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT(jacobian_at(J, 64).determinant(), 0.0);
}

TEST(Jacobian, NonlinearMatchesFiniteDifferenceAndKeepsStructure) {
  auto f = sine_field();
  VolterraKernel k(KernelFamily::RiemannLiouville, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 256), 2, 0, 1, 41, SamplingMethod::Convolution, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  Eigen::Vector2d y0(0.2, 0.4);
  auto z = solve_rde(lift, f, y0);
  auto J = solve_jacobian(lift, f, z);
  Eigen::Matrix2d fd;
  const double h = 1e-6;
  for (int c = 0; c < 2; ++c) {
    Eigen::Vector2d e = Eigen::Vector2d::Unit(c) * h;
    fd.col(c) = (solve_rde(lift, f, y0 + e).at(256) - solve_rde(lift, f, y0 - e).at(256)) / (2 * h);
  }
  EXPECT_LT((jacobian_at(J, 256) - fd).cwiseAbs().maxCoeff(), 2e-2);
  for (std::size_t i = 0; i < J.size(); i += 32) EXPECT_GT(jacobian_at(J, i).determinant(), 0.0);
}

TEST(Jacobian, AugmentedObservationBlockIsTriangular) {
  // σ̂ = diag(σ(x, y), 1): the y-coordinate is the driver itself, so ∂y/∂x = 0 and ∂y/∂y = 1.
  VectorField sigma;
  sigma.state_dim = 2;
  sigma.rows = 1;
  sigma.cols = 1;
  sigma.eval = [](const Eigen::VectorXd& z) { return Eigen::MatrixXd::Constant(1, 1, 0.5 + 0.2 * std::sin(z(0) + z(1))); };
  auto hat = augment_with_identity(sigma, 1);
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 64), 2, 0, 1, 43, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  auto z = solve_rde(lift, hat, Eigen::Vector2d(1.0, 0.0));
  auto J = solve_jacobian(lift, hat, z);
  for (std::size_t i = 0; i < J.size(); ++i) {
    const auto Ji = jacobian_at(J, i);
    EXPECT_NEAR(Ji(1, 0), 0.0, 1e-12);
    EXPECT_NEAR(Ji(1, 1), 1.0, 1e-12);
    EXPECT_GT(Ji.determinant(), 0.0);
  }
}

TEST(SolutionExport, CsvHeader) {
  auto lift = smooth_lift(4, 2, sin_path);
  auto z = solve_rde(lift, constant_field(Eigen::MatrixXd::Ones(1, 1), 1), Eigen::VectorXd::Zero(1));
  auto J = solve_jacobian(lift, constant_field(Eigen::MatrixXd::Ones(1, 1), 1), z);
  std::ostringstream os;
  write_solution_csv(os, z, &J);
  EXPECT_EQ(os.str().substr(0, 18), "time,y_1,J_11\n0,0,");
}
