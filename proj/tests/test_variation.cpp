#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "roughfilter/variation.hpp"

using namespace roughfilter;

namespace {

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

SampledFunction1D random_walk(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) v[i] = v[i - 1] + g(rng);
  return SampledFunction1D::scalar(linspace(0, 1, n), v);
}

double brute_force_pvar(const SampledFunction1D& f, double p) {
  const std::size_t n = f.size();
  const std::size_t inner = n - 2;
  double best = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << inner); ++mask) {
    std::size_t prev = 0;
    double s = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
      const bool keep = k == n - 1 || (mask >> (k - 1)) & 1u;
      if (!keep) continue;
      s += std::pow((f.values[k] - f.values[prev]).norm(), p);
      prev = k;
    }
    best = std::max(best, s);
  }
  return std::pow(best, 1.0 / p);
}

}  // namespace

TEST(PVariation, MonotonePathHasTotalIncrementAsOneVariation) {
  std::vector<double> v{0.0, 0.5, 0.6, 2.0, 2.5};
  auto f = SampledFunction1D::scalar(linspace(0, 1, 5), v);
  EXPECT_DOUBLE_EQ(p_variation(f, 1.0), 2.5);
}

TEST(PVariation, TwoPoints) {
  auto f = SampledFunction1D::scalar({0.0, 1.0}, std::vector<double>{0.0, 3.0});
  for (double p : {1.0, 2.0, 3.7}) EXPECT_NEAR(p_variation(f, p), 3.0, 1e-14);
}

TEST(PVariation, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    auto f = random_walk(10, rng);
    EXPECT_NEAR(p_variation(f, 2.0), brute_force_pvar(f, 2.0), 1e-12);
    EXPECT_NEAR(p_variation(f, 2.7), brute_force_pvar(f, 2.7), 1e-12);
  }
}

TEST(PVariation, RejectsBadInput) {
  auto f = SampledFunction1D::scalar({0.0, 1.0}, std::vector<double>{0.0, 3.0});
  EXPECT_THROW(p_variation(f, 0.5), std::invalid_argument);
  EXPECT_THROW(SampledFunction1D::scalar({0.0, 0.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(SampledFunction1D::scalar({0.0, 1.0}, std::vector<double>{1.0, NAN}), std::invalid_argument);
}

TEST(PVariation, NonincreasingInP) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto f = random_walk(60, rng);
    double prev = p_variation(f, 1.0);
    for (double p = 1.25; p <= 4.0; p += 0.25) {
      const double v = p_variation(f, p);
      EXPECT_LE(v, prev * (1 + 1e-12));
      prev = v;
    }
  }
}

TEST(PVariation, ControlIsSuperadditive) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> pick(0, 79);
  for (int rep = 0; rep < 50; ++rep) {
    auto f = random_walk(80, rng);
    std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
    std::size_t idx[3] = {a, b, c};
    std::sort(idx, idx + 3);
    const double p = 2.5;
    EXPECT_LE(p_variation_control(f, p, idx[0], idx[1]) + p_variation_control(f, p, idx[1], idx[2]),
              p_variation_control(f, p, idx[0], idx[2]) * (1 + 1e-12) + 1e-12);
  }
}

TEST(RhoVariation2D, ProductFunction) {
  auto g = linspace(0, 1, 17);
  auto R = SampledFunction2D::from(g, g, [](double s, double u) { return s * u; });
  auto r = rho_var_2d(R, 1.0, {0, 1, 0, 1});
  EXPECT_NEAR(r.value, 1.0, 1e-12);
  EXPECT_TRUE(r.lower_bound);
}

TEST(RhoVariation2D, TensorProductFactorizes) {
  auto g = linspace(0, 1, 13);
  auto fa = [](double s) { return std::sin(6.0 * s); };
  auto fb = [](double u) { return u * u - u; };
  auto R = SampledFunction2D::from(g, g, [&](double s, double u) { return fa(s) * fb(u); });
  std::vector<double> va, vb;
  for (double t : g) {
    va.push_back(fa(t));
    vb.push_back(fb(t));
  }
  const double expected = p_variation(SampledFunction1D::scalar(g, va), 1.0) * p_variation(SampledFunction1D::scalar(g, vb), 1.0);
  EXPECT_NEAR(rho_var_2d(R, 1.0, {0, 1, 0, 1}).value, expected, 1e-12);
}

TEST(RhoVariation2D, BrownianCovarianceDiagonalMass) {
  auto g = linspace(0, 1, 65);
  auto R = SampledFunction2D::from(g, g, [](double s, double u) { return std::min(s, u); });
  EXPECT_NEAR(rho_var_2d(R, 1.0, {0, 1, 0, 1}).value, 1.0, 1e-12);
}

TEST(RhoVariation2D, DegenerateRectangle) {
  auto g = linspace(0, 1, 9);
  auto R = SampledFunction2D::from(g, g, [](double s, double u) { return std::exp(s - u); });
  auto r = rho_var_2d(R, 1.3, {0.25, 0.75, 0.5, 0.5});
  EXPECT_EQ(r.value, 0.0);
  EXPECT_THROW(rho_var_2d(R, 1.3, {0.0, 0.3, 0.0, 1.0}), std::invalid_argument);
}

TEST(Young1D, Examples) {
  auto g = linspace(0, 1, 4097);
  std::vector<double> id, sq, cube, c(g.size(), 2.5);
  for (double t : g) {
    id.push_back(t);
    sq.push_back(t * t);
    cube.push_back(t * t * t);
  }
  auto fid = SampledFunction1D::scalar(g, id);
  EXPECT_NEAR(young_integral_1d(fid, fid), 0.5, 1e-3);
  EXPECT_NEAR(young_integral_1d(SampledFunction1D::scalar(g, sq), SampledFunction1D::scalar(g, cube)), 0.6, 1e-3);
  EXPECT_DOUBLE_EQ(young_integral_1d(SampledFunction1D::scalar(g, c), SampledFunction1D::scalar(g, cube)), 2.5 * 1.0);
}

TEST(Young1D, IntegrationByParts) {
  auto g = linspace(0, 2, 2049);
  std::vector<double> a, b;
  for (double t : g) {
    a.push_back(std::sin(t));
    b.push_back(std::exp(-t));
  }
  auto fa = SampledFunction1D::scalar(g, a), fb = SampledFunction1D::scalar(g, b);
  const double lhs = young_integral_1d(fa, fb) + young_integral_1d(fb, fa);
  EXPECT_NEAR(lhs, a.back() * b.back() - a.front() * b.front(), 2e-3);
}

TEST(Young1D, CommonRefinement) {
  auto coarse = linspace(0, 1, 3);
  auto fine = linspace(0, 1, 5);
  std::vector<double> fc{0.0, 0.5, 1.0}, gf{0.0, 0.25, 0.5, 0.75, 1.0};
  const double v = young_integral_1d(SampledFunction1D::scalar(coarse, fc), SampledFunction1D::scalar(fine, gf));
  EXPECT_NEAR(v, (0.0 + 0.25 + 0.5 + 0.75) * 0.25, 1e-15);
  EXPECT_THROW(young_integral_1d(SampledFunction1D(coarse, {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 2)}),
                                 SampledFunction1D::scalar(fine, gf)),
               std::invalid_argument);
}

TEST(Young2D, Examples) {
  auto g = linspace(0, 1, 513);
  auto f = SampledFunction2D::from(g, g, [](double s, double u) { return s * u; });
  EXPECT_NEAR(young_integral_2d(f, f, {0, 1, 0, 1}), 0.25, 1e-3);
  auto one = SampledFunction2D::from(g, g, [](double, double) { return 1.0; });
  auto h = SampledFunction2D::from(g, g, [](double s, double u) { return std::cos(s) * u * u; });
  EXPECT_NEAR(young_integral_2d(one, h, {0.25, 0.75, 0.5, 1.0}),
              (std::cos(0.75) - std::cos(0.25)) * (1.0 - 0.25), 1e-12);
  EXPECT_EQ(young_integral_2d(one, h, {0.25, 0.75, 0.5, 0.5}), 0.0);
  EXPECT_THROW(young_integral_2d(one, h, {0.0, 1.5, 0.0, 1.0}), std::invalid_argument);
}
