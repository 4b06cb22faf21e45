#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "roughfilter/filtering.hpp"

using namespace roughfilter;

namespace {

FieldSpec constant(double v) {
  FieldSpec f;
  f.family = FieldFamily::Constant;
  f.offset = v;
  f.scale = 0.0;
  return f;
}

FieldSpec linear(double slope) {
  FieldSpec f;
  f.family = FieldFamily::Linear;
  f.scale = slope;
  return f;
}

Scenario linear_gaussian(std::size_t grid_n = 32, std::size_t refine = 8) {
  Scenario s;
  s.sigma = constant(0.5);
  s.b = linear(1.0);
  s.x0.kind = InitialLaw::Kind::Gaussian;
  s.x0.mean = 2.0;
  s.x0.sd = 0.5;
  s.grid_n = grid_n;
  s.inner_refine = refine;
  s.phi = TestFunction::coordinate(0);
  return s;
}

Scenario rough_scenario() {
  Scenario s;
  s.kernel = VolterraKernel(KernelFamily::MandelbrotVanNess, 0.4);
  s.sigma.family = FieldFamily::Sine;
  s.sigma.offset = 0.6;
  s.sigma.scale = 0.2;
  s.sigma.y_coef = 0.5;
  s.b.family = FieldFamily::Tanh;
  s.b.scale = 0.8;
  s.x0.mean = 0.3;
  s.grid_n = 16;
  s.inner_refine = 8;
  s.phi = TestFunction::coordinate(0);
  return s;
}

}  // namespace

TEST(FieldRegistry, DerivativesMatchFiniteDifferences) {
  for (auto fam : {FieldFamily::Linear, FieldFamily::Tanh, FieldFamily::Sine}) {
    FieldSpec spec;
    spec.family = fam;
    spec.offset = 0.1;
    spec.scale = 0.7;
    spec.x_coef = 1.3;
    spec.y_coef = -0.4;
    auto f = registry_field(spec, 2, 1, 2, 2, {{0, 0, 0, 0}, {1, 1, 1, 0}}, "test");
    Eigen::Vector3d z(0.3, -0.2, 0.9);
    auto J = f.jacobian(z);
    auto Jfd = f.fd_jacobian(z);
    auto H = f.hessian(z);
    VectorField g = f;
    g.hess = nullptr;
    auto Hfd = g.hessian(z);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_LT((J[c] - Jfd[c]).cwiseAbs().maxCoeff(), 1e-8);
      for (std::size_t r = 0; r < 2; ++r) EXPECT_LT((H[c][r] - Hfd[c][r]).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
  EXPECT_THROW(parse_field_family("cubic"), std::invalid_argument);
}

TEST(TestFunctions, Values) {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.0);
  TestFunction p;
  p.kind = TestFunction::Kind::Polynomial;
  p.coeffs = {1.0, -1.0, 0.5};
  EXPECT_DOUBLE_EQ(p(x), 1.0 - 2.0 + 2.0);
  TestFunction ind;
  ind.kind = TestFunction::Kind::IndicatorAbove;
  ind.threshold = 1.5;
  EXPECT_EQ(ind(x), 1.0);
  EXPECT_TRUE(ind.bounded());
  EXPECT_DOUBLE_EQ(TestFunction::one()(x), 1.0);
}

TEST(Truth, ZeroDriftGivesUnitWeights) {
  auto s = rough_scenario();
  s.b = constant(0.0);
  TruthSimulator sim(s);
  auto p = sim.simulate(5);
  EXPECT_EQ(p.log_lambda.cwiseAbs().maxCoeff(), 0.0);
  // Y is the Gaussian block itself: same stream re-drawn directly
  JointSampler sampler(s.kernel, s.fine_grid(), s.method);
  Rng rng(derive_seed(5, 0));
  auto g = sampler.draw(2, 1, rng, 5);
  EXPECT_LT((p.Y.row(0) - g.B.row(0)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((p.W.row(0) - g.W.row(0)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Truth, ObservationIsConvolutionOfW) {
  auto s = rough_scenario();
  TruthSimulator sim(s);
  auto p = sim.simulate(11);
  auto C = convolution_matrix(s.kernel, p.grid);
  Eigen::VectorXd dW = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.grid.size()));
  for (std::size_t j = 0; j + 1 < p.grid.size(); ++j) dW(static_cast<Eigen::Index>(j)) = p.W(0, static_cast<Eigen::Index>(j + 1)) - p.W(0, static_cast<Eigen::Index>(j));
  EXPECT_LT((C * dW - p.Y.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Truth, LinearGaussianMomentsMatchEulerMaruyama) {
  auto s = linear_gaussian(16, 4);
  TruthSimulator sim(s);
  const std::size_t n = 10000, steps = 64;
  std::vector<double> xT(n), yT(n), xe(n), ye(n);
  parallel_for(n, [&](std::size_t i) {
    auto p = sim.simulate(derive_seed(101, i));
    xT[i] = p.X(0, static_cast<Eigen::Index>(steps));
    yT[i] = p.Y(0, static_cast<Eigen::Index>(steps));
    // independent Euler–Maruyama for dX = σ dB, dY = βX dt + dW
    Rng rng(derive_seed(202, i));
    std::normal_distribution<double> N(0.0, 1.0);
    const double h = 1.0 / steps;
    double x = 2.0 + 0.5 * N(rng), y = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      y += x * h + std::sqrt(h) * N(rng);
      x += 0.5 * std::sqrt(h) * N(rng);
    }
    xe[i] = x;
    ye[i] = y;
  });
  auto check = [](std::vector<double>& a, std::vector<double>& b) {
    auto ma = mean_stderr(a), mb = mean_stderr(b);
    EXPECT_LE(std::abs(ma.mean - mb.mean), 4 * std::hypot(ma.stderr_, mb.stderr_));
    std::vector<double> qa(a.size()), qb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      qa[i] = (a[i] - ma.mean) * (a[i] - ma.mean);
      qb[i] = (b[i] - mb.mean) * (b[i] - mb.mean);
    }
    auto va = mean_stderr(qa), vb = mean_stderr(qb);
    EXPECT_LE(std::abs(va.mean - vb.mean), 4 * std::hypot(va.stderr_, vb.stderr_));
  };
  check(xT, xe);
  check(yT, ye);
}

TEST(Truth, GirsanovWeightIsMartingale) {
  auto s = rough_scenario();
  TruthSimulator sim(s);
  const std::size_t n = 4000;
  std::vector<double> lam(n);
  parallel_for(n, [&](std::size_t i) { lam[i] = std::exp(sim.simulate(derive_seed(7, i), Measure::Reference).log_lambda(128)); });
  auto ms = mean_stderr(lam);
  EXPECT_LE(std::abs(ms.mean - 1.0), 4 * ms.stderr_);
}

TEST(Xi, ZeroDriftAndMissingW) {
  auto s = rough_scenario();
  s.b = constant(0.0);
  auto p = simulate_truth(s, 3);
  auto lift = lift_joint_hybrid(p.grid, p.B, p.Y, p.W, 2, s.inner_refine);
  auto z = solve_decoupled(s, lift, Eigen::VectorXd::Constant(1, 0.3));
  EXPECT_EQ(xi_rough(s, lift, z).cwiseAbs().maxCoeff(), 0.0);
  Eigen::MatrixXd BY(2, p.B.cols());
  BY << p.B, p.Y;
  auto geo = lift_segmentwise(as_sampled(p.grid, BY), 2);
  auto zg = solve_rde(geo, augment_with_identity(s.sigma_field(), 1), Eigen::Vector2d(0.3, 0.0));
  EXPECT_THROW(xi_rough(s, geo, zg), std::invalid_argument);
}

TEST(Xi, TracksItoLogWeightUnderRefinement) {
  // fine truth on 2^9 intervals; Ξ on outer grids 2^4..2^7
  auto s = rough_scenario();
  s.grid_n = 1;
  s.inner_refine = 512;
  TruthSimulator sim(s);
  std::vector<double> gap(4, 0.0);
  for (int path = 0; path < 20; ++path) {
    auto p = sim.simulate(derive_seed(17, path), Measure::Reference);
    for (int l = 0; l < 4; ++l) {
      const std::size_t outer = std::size_t{16} << l;
      Scenario c = s;
      c.grid_n = outer;
      c.inner_refine = 512 / outer;
      auto lift = lift_joint_hybrid(p.grid, p.B, p.Y, p.W, c.lift_level(), c.inner_refine);
      auto z = solve_decoupled(c, lift, Eigen::VectorXd::Constant(1, 0.3));
      gap[l] += std::abs(xi_rough(c, lift, z)(static_cast<Eigen::Index>(outer)) - p.log_lambda(512)) / 20;
    }
  }
  for (int l = 1; l < 4; ++l) EXPECT_LT(gap[l], gap[l - 1]);
}

TEST(RobustFilter, TrivialCases) {
  auto s = rough_scenario();
  s.b = constant(0.0);
  s.phi = TestFunction::one();
  auto p = simulate_truth(s, 1);
  auto est = robust_filter(s, observed(p), 50, 9, {0.0, 0.5, 1.0});
  for (const auto& e : est) {
    EXPECT_EQ(e.value, 1.0);
    EXPECT_EQ(e.stderr_, 0.0);
    EXPECT_EQ(e.n_samples, 50u);
  }
  auto s2 = rough_scenario();
  auto p2 = simulate_truth(s2, 2);
  auto e0 = robust_filter(s2, observed(p2), 20, 3, {0.0});
  EXPECT_EQ(e0[0].value, 0.3);
  EXPECT_THROW(robust_filter(s2, observed(p2), 20, 3, {0.33}), std::invalid_argument);
}

TEST(RobustFilter, ThreadCountDoesNotChangeResults) {
  auto s = rough_scenario();
  auto p = simulate_truth(s, 21);
  FilterOptions one, two;
  one.threads = 1;
  two.threads = 3;
  auto a = normalized_filter(s, observed(p), 64, 5, {1.0}, one);
  auto b = normalized_filter(s, observed(p), 64, 5, {1.0}, two);
  EXPECT_EQ(a[0].value, b[0].value);
  EXPECT_EQ(a[0].stderr_, b[0].stderr_);
}

TEST(NormalizedFilter, ScalingTestFunction) {
  auto s = rough_scenario();
  auto p = simulate_truth(s, 4);
  auto fs = filter_samples(s, observed(p), 400, 8, {0.5, 1.0});
  TestFunction phi = TestFunction::coordinate(0), scaled = phi;
  scaled.factor = -3.0;
  auto a = normalized_estimates(fs, phi), b = normalized_estimates(fs, scaled);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b[i].value, -3.0 * a[i].value, 1e-12 * std::abs(a[i].value));
    EXPECT_NEAR(b[i].stderr_, 3.0 * a[i].stderr_, 1e-12 * a[i].stderr_);
  }
  TestFunction ind;
  ind.kind = TestFunction::Kind::IndicatorAbove;
  ind.threshold = 0.3;
  for (const auto& e : normalized_estimates(fs, ind)) {
    EXPECT_GE(e.value, 0.0);
    EXPECT_LE(e.value, 1.0);
  }
  for (const auto& e : unnormalized_estimates(fs, TestFunction::one())) EXPECT_GT(e.value, 0.0);
}

TEST(NormalizedFilter, NoInformationEqualsPrior) {
  auto s = rough_scenario();
  s.b = constant(0.0);
  s.x0.kind = InitialLaw::Kind::Gaussian;
  s.x0.sd = 0.4;
  auto p = simulate_truth(s, 6);
  auto est = normalized_filter(s, observed(p), 2000, 12, {1.0});
  TruthSimulator sim(s);
  std::vector<double> direct(2000);
  for (std::size_t i = 0; i < direct.size(); ++i) direct[i] = sim.simulate(derive_seed(99, i)).X(0, 128);
  auto ms = mean_stderr(direct);
  EXPECT_LE(std::abs(est[0].value - ms.mean), 3 * std::hypot(est[0].stderr_, ms.stderr_));
}

TEST(NormalizedFilter, KalmanBucySingleDraw) {
  auto s = linear_gaussian(32, 8);
  auto p = simulate_truth(s, 31);
  auto kb = kalman_bucy(p.grid, p.Y.row(0), 2.0, 0.25, 0.5, 1.0);
  auto est = normalized_filter(s, observed(p), 3000, 77, {1.0});
  EXPECT_LE(std::abs(est[0].value - kb.mean.back()), 4 * est[0].stderr_ + 0.05 * std::abs(kb.mean.back()));
}

TEST(NormalizedFilter, RefusesDegenerateAndFailingRuns) {
  auto s = rough_scenario();
  s.sigma.family = FieldFamily::Linear;
  s.sigma.scale = 60.0;
  s.sigma.offset = 0.0;
  s.x0.mean = 1.0;
  auto p = simulate_truth(rough_scenario(), 8);
  EXPECT_THROW(normalized_filter(s, observed(p), 200, 1, {1.0}), FilterFailure);
}

TEST(KalmanBucy, RiccatiClosedForm) {
  auto grid = uniform_grid(1.0, 512);
  Eigen::RowVectorXd Y = Eigen::RowVectorXd::Zero(513);
  const double sigma = 0.5, beta = 1.0, P0 = 0.25;
  auto kb = kalman_bucy(grid, Y, 2.0, P0, sigma, beta);
  const double c = sigma / beta;
  const double exact = c * std::tanh(sigma * beta * 1.0 + std::atanh(P0 / c));
  EXPECT_NEAR(kb.var.back(), exact, 1e-10);
  // without observation increments the mean decays by exp(-∫β²P)
  EXPECT_GT(kb.mean.back(), 0.0);
  EXPECT_LT(kb.mean.back(), 2.0);
}

TEST(CameronMartin, ShiftIsConsistent) {
  auto s = rough_scenario();
  auto p = simulate_truth(s, 13);
  auto sh = cameron_martin_shift(observed(p), s.kernel, 0.1);
  const auto n = static_cast<Eigen::Index>(p.grid.size() - 1);
  EXPECT_NEAR(sh.W(0, n) - p.W(0, n), 0.1, 1e-14);
  EXPECT_NEAR(sh.Y(0, n) - p.Y(0, n), 0.1 * s.kernel.cross_covariance(1.0, 0.0, 1.0), 1e-14);
  // the shifted pair keeps Y = ∫K dW up to quadrature of the linear shift
  auto C = convolution_matrix(s.kernel, p.grid);
  Eigen::VectorXd dW = Eigen::VectorXd::Zero(n + 1);
  for (Eigen::Index j = 0; j < n; ++j) dW(j) = sh.W(0, j + 1) - sh.W(0, j);
  EXPECT_LT((C * dW - sh.Y.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Trapezoid, ConstantIntegrandHasNoDefect) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto smp = sample_joint(k, uniform_grid(1.0, 256), 2, 1, 1, 3, SamplingMethod::Convolution, 1).front();
  Eigen::MatrixXd B = smp.B.row(1), Y = smp.B.row(0), W = smp.W.row(0);
  auto lift = lift_joint_hybrid(smp.grid, B, Y, W, 2, 8);
  Eigen::MatrixXd c(1, 3);
  c << 0.4, -1.2, 2.5;
  auto L = compose_one_form(constant_field(c, 3), controlled_driver(lift));
  auto r = trapezoid_check(L, lift, k, 1, 1);
  EXPECT_NEAR(r.defect, 0.0, 1e-15);
  EXPECT_EQ(r.young_correction, 0.0);
}

TEST(Trapezoid, BrownianDefectIsCentred) {
  VolterraKernel k;
  auto grid = uniform_grid(1.0, 256);
  auto paths = sample_joint(k, grid, 1, 1, 1000, 19, SamplingMethod::Convolution, 0);
  VectorField f;  // L^W = Y on coordinates (Y, W)
  f.state_dim = 2;
  f.rows = 1;
  f.cols = 2;
  f.eval = [](const Eigen::VectorXd& z) {
    Eigen::MatrixXd m(1, 2);
    m << 0.0, z(0);
    return m;
  };
  std::vector<double> d(paths.size());
  double corr = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto lift = lift_joint_hybrid(paths[i], {0}, 2, 8);
    auto r = trapezoid_check(compose_one_form(f, controlled_driver(lift)), lift, k, 0, 1);
    d[i] = r.defect;
    corr = r.young_correction;
  }
  EXPECT_NEAR(corr, 0.5, 1e-12);
  auto ms = mean_stderr(d);
  EXPECT_LE(std::abs(ms.mean), 3 * ms.stderr_);
}

TEST(Density, SingleBumpAndMass) {
  std::vector<double> grid;
  for (int i = 0; i <= 2000; ++i) grid.push_back(-10 + 0.01 * i);
  std::vector<double> x{1.0}, w{1.0};
  auto rho = density_kde(x, w, 0.3, grid);
  EXPECT_NEAR(trapezoid(grid, rho), 1.0, 1e-6);
  EXPECT_NEAR(rho[1100], 1.0 / (0.3 * std::sqrt(2 * std::numbers::pi)), 1e-12);
  std::vector<double> x3{0.0, 1.0, 2.0}, w3{0.5, 0.25, 2.0};
  EXPECT_NEAR(trapezoid(grid, density_kde(x3, w3, 0.2, grid)), 2.75, 1e-6);
  std::vector<double> z{0.0};
  EXPECT_THROW(density_kde(x, z, 0.3, grid), std::invalid_argument);
  EXPECT_THROW(density_kde(x, w, 0.0, grid), std::invalid_argument);
}

TEST(Density, StandardNormalConsistency) {
  Rng rng(2024);
  std::normal_distribution<double> N(0.0, 1.0);
  std::vector<double> x(100000), w(100000, 1.0 / 100000);
  for (auto& v : x) v = N(rng);
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i) grid.push_back(-6 + 0.03 * i);
  auto rho = density_kde(x, w, silverman_bandwidth(x, w), grid);
  std::vector<double> diff(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) diff[i] = std::abs(rho[i] - std::exp(-0.5 * grid[i] * grid[i]) / std::sqrt(2 * std::numbers::pi));
  EXPECT_LE(trapezoid(grid, diff), 0.02);
}
