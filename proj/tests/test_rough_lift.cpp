#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "roughfilter/rough_lift.hpp"

using namespace roughfilter;

namespace {

SampledFunction1D circle_polyline(std::size_t n) {
  std::vector<double> t(n + 1);
  std::vector<Eigen::VectorXd> v;
  for (std::size_t k = 0; k <= n; ++k) {
    t[k] = static_cast<double>(k) / static_cast<double>(n);
    const double a = 2 * std::numbers::pi * t[k];
    v.push_back(Eigen::Vector2d(std::cos(a), std::sin(a)));
  }
  return SampledFunction1D(t, v);
}

}  // namespace

TEST(LiftSegmentwise, LineSignature) {
  auto f = SampledFunction1D::scalar({0.0, 1.0}, std::vector<double>{0.0, 1.0});
  auto lift = lift_segmentwise(f, 3);
  const auto& g = lift.increments()[0];
  EXPECT_DOUBLE_EQ(g.l1(0), 1.0);
  EXPECT_DOUBLE_EQ(g.l2(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(g.l3(0, 0, 0), 1.0 / 6.0);
  EXPECT_EQ(lift.mode(), LiftMode::Geometric);
}

TEST(LiftSegmentwise, LevelOneTelescopes) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 64), 3, 0, 1, 5, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  auto total = lift.composite(0, lift.intervals());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(total.l1(i), s.B(static_cast<Eigen::Index>(i), 64), 1e-13);
  EXPECT_LE(grouplike_residual(total), 1e-10);
}

TEST(LiftSegmentwise, CircleAreaMatchesShoelace) {
  auto f = circle_polyline(256);
  auto lift = lift_segmentwise(f, 2);
  auto g = lift.composite(0, lift.intervals());
  // shoelace: twice the polygon area
  double shoelace = 0;
  for (std::size_t k = 0; k + 1 < f.size(); ++k)
    shoelace += f.values[k](0) * f.values[k + 1](1) - f.values[k + 1](0) * f.values[k](1);
  EXPECT_NEAR(g.l2(0, 1) - g.l2(1, 0), shoelace, 1e-12);
  EXPECT_NEAR(g.l2(0, 1) - g.l2(1, 0), 2 * std::numbers::pi, 2e-2);
}

TEST(LiftGeometric, RandomSubintervalsAreGrouplike) {
  VolterraKernel k(KernelFamily::RiemannLiouville, 0.35);
  auto s = sample_joint(k, uniform_grid(1.0, 128), 2, 0, 1, 9, SamplingMethod::Convolution, 1).front();
  auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 3);
  Rng rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, 128);
  for (int r = 0; r < 50; ++r) {
    std::size_t a = pick(rng), b = pick(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(grouplike_residual(lift.composite(a, b)), 1e-10);
  }
}

TEST(ChenResidual, ConstructionAndFaultInjection) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 64), 2, 2, 1, 1, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_joint_hybrid(s, {1}, 3, 4);
  EXPECT_LE(chen_residual(lift), 1e-12);
  auto geo = lift_segmentwise(as_sampled(s.grid, s.B), 2);
  EXPECT_LE(chen_residual(geo), 1e-12);
  geo.mutable_increments()[10].l2(0, 1) += 1e-3;
  EXPECT_GE(chen_residual(geo), 1e-3 * (1 - 1e-9));
  auto single = lift_segmentwise(SampledFunction1D::scalar({0.0, 1.0}, std::vector<double>{0.0, 2.0}), 2);
  EXPECT_EQ(chen_residual(single), 0.0);
}

TEST(HybridLift, CompletionAndGrouplike) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto s = sample_joint(k, uniform_grid(1.0, 128), 2, 2, 1, 17, SamplingMethod::Cholesky, 1).front();
  auto lift = lift_joint_hybrid(s, {0, 1}, 3, 8);
  // coordinates: Y1, Y2, W1, W2 (no free B)
  ASSERT_EQ(lift.dim(), 4u);
  EXPECT_EQ(lift.mode(), LiftMode::ItoCross);
  EXPECT_EQ(lift.block_labels()[0], BlockLabel::Observation);
  EXPECT_EQ(lift.block_labels()[3], BlockLabel::Brownian);
  for (std::size_t a = 0; a + 5 < lift.intervals(); a += 7) {
    auto g = lift.composite(a, a + 5);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(g.l2(j, j + 2) + g.l2(j + 2, j), g.l1(j) * g.l1(j + 2), 1e-12);
    EXPECT_LE(grouplike_residual(g), 1e-10);
  }
  EXPECT_THROW(lift_joint_hybrid(s, {2}, 2, 4), std::invalid_argument);
}

TEST(HybridLift, ItoIntegralOfBrownianMotion) {
  VolterraKernel k;
  auto grid = uniform_grid(1.0, 4096);
  auto s = sample_joint(k, grid, 1, 1, 1, 23, SamplingMethod::Convolution, 1).front();
  auto lift = lift_joint_hybrid(s, {0}, 2, 64);
  auto g = lift.composite(0, lift.intervals());
  const double WT = s.W(0, 4096);
  EXPECT_NEAR(g.l2(0, 1), 0.5 * WT * WT - 0.5, 0.05);
}

TEST(HybridLift, CrossEntryIsCentred) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto grid = uniform_grid(1.0, 128);
  auto samples = sample_joint(k, grid, 1, 1, 10000, 31, SamplingMethod::Convolution, 0);
  std::vector<double> v(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto lift = lift_joint_hybrid(samples[i], {0}, 2, 8);
    v[i] = lift.from_start(lift.intervals()).l2(0, 1);
  }
  auto ms = mean_stderr(v);
  EXPECT_LE(std::abs(ms.mean), 3 * ms.stderr_);
}

TEST(HybridLift, ItoMinusGeometricDefectAtHalf) {
  // At H = 1/2 the hybrid minus geometric cross entry over [0,t] is -R̂(t)/2.
  VolterraKernel k(KernelFamily::RiemannLiouville, 0.5);
  auto grid = uniform_grid(1.0, 64);
  auto samples = sample_joint(k, grid, 1, 1, 4000, 37, SamplingMethod::Convolution, 0);
  std::vector<double> diff(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto hyb = lift_joint_hybrid(samples[i], {0}, 2, 1);
    Eigen::MatrixXd X(2, samples[i].B.cols());
    X.row(0) = samples[i].B.row(0);
    X.row(1) = samples[i].W.row(0);
    auto geo = lift_segmentwise(as_sampled(grid, X), 2);
    diff[i] = hyb.from_start(48).l2(0, 1) - geo.from_start(48).l2(0, 1);
  }
  auto ms = mean_stderr(diff);
  EXPECT_LE(std::abs(ms.mean + 0.5 * k.cross_covariance(0.75, 0.0, 0.75)), 3 * ms.stderr_ + 1e-12);
}

TEST(GreedyPartition, Examples) {
  std::vector<double> t, v;
  for (int k = 0; k <= 64; ++k) {
    t.push_back(k / 64.0);
    v.push_back(2.0 * k / 64.0);
  }
  auto lift = lift_segmentwise(SampledFunction1D::scalar(t, v), 2);
  // homogeneous norm of a line segment equals its length at every level
  EXPECT_EQ(greedy_partition_count(lift, 0.5, 1.0), 3u);
  EXPECT_EQ(greedy_partition_count(lift, 10.0, 1.0), 0u);
  EXPECT_THROW(greedy_partition_count(lift, 0.0, 1.0), std::invalid_argument);
}

TEST(GreedyPartition, BoundHoldsOnFbmLifts) {
  VolterraKernel k(KernelFamily::MandelbrotVanNess, 0.4);
  auto paths = sample_joint(k, uniform_grid(1.0, 32), 2, 0, 20, 41, SamplingMethod::Cholesky, 0);
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  int draws = 0;
  for (const auto& s : paths) {
    auto lift = lift_segmentwise(as_sampled(s.grid, s.B), 2);
    const double p = 2.6;
    const double total = lift_pvar_control(lift, p, 0, lift.intervals());
    for (int r = 0; r < 10; ++r, ++draws) {
      const double alpha = u(rng) * total;
      EXPECT_LE(alpha * static_cast<double>(greedy_partition_count(lift, alpha, p)), total * (1 + 1e-12));
    }
  }
  EXPECT_EQ(draws, 200);
}

TEST(DyadicConvergence, SmoothPathFirstOrder) {
  const int n_max = 9;
  auto grid = uniform_grid(1.0, std::size_t{1} << n_max);
  Eigen::MatrixXd X(2, static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    X(0, static_cast<Eigen::Index>(k)) = std::sin(2 * std::numbers::pi * grid[k]);
    X(1, static_cast<Eigen::Index>(k)) = std::cos(3 * grid[k]);
  }
  auto rows = dyadic_distances({X}, grid, 5, n_max, 2.5, 1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double ratio = rows[i].mean / rows[i - 1].mean;
    EXPECT_LT(ratio, 0.6);
  }
}

TEST(DyadicConvergence, BrownianDistancesDecrease) {
  auto rows = dyadic_convergence_study(VolterraKernel(), 2, 5, 8, 2.5, 100, 77, 0);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].mean, rows[i - 1].mean);
}

TEST(DyadicConvergence, RejectsBadLevels) {
  EXPECT_THROW(dyadic_convergence_study(VolterraKernel(), 1, 5, 5, 2.5, 1, 1), std::invalid_argument);
  EXPECT_THROW(dyadic_convergence_study(VolterraKernel(), 1, 5, 15, 2.5, 1, 1), std::invalid_argument);
}

TEST(LiftExport, CsvWords) {
  auto lift = lift_segmentwise(SampledFunction1D({0.0, 1.0}, {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 2)}), 2);
  std::ostringstream os;
  write_lift_csv(os, lift);
  const std::string s = os.str();
  EXPECT_NE(s.find("t_start,t_end,word,value"), std::string::npos);
  EXPECT_NE(s.find("0,1,12,1\n"), std::string::npos);
  EXPECT_NE(s.find("0,1,22,2\n"), std::string::npos);
}
