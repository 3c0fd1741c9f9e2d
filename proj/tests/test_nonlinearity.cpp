#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "extinction/nonlinearity.hpp"

using namespace extinction;

namespace {

// v + c * section(v) = z by plain bisection on the monotone map.
double bisection_resolvent(const PsiGraph& g, double c, double z) {
  double lo = std::min(z, 0.0), hi = std::max(z, 0.0);
  for (int i = 0; i < 400 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (mid + c * psi_minimal_section(g, mid) < z) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<PsiGraph> random_graphs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 3.0), ur(0.05, 0.95);
  return {PsiGraph::soc(u(rng), u(rng)),          PsiGraph::soc(u(rng), 0.0),
          PsiGraph::soc(u(rng), u(rng), true),    PsiGraph::fast_diffusion(ur(rng)),
          PsiGraph::power_plus_linear(u(rng), ur(rng), u(rng)), PsiGraph::linear(u(rng))};
}

double inclusion_distance(const PsiGraph& g, double c, double z, double v) {
  const Interval iv = psi_values(g, v);
  const double y = (z - v) / c;
  const double dist = y < iv.lo ? iv.lo - y : (y > iv.hi ? y - iv.hi : 0.0);
  return c * dist;
}

}  // namespace

TEST(Section, Examples) {
  const auto soc = PsiGraph::soc(1.0, 2.0);
  EXPECT_EQ(psi_minimal_section(soc, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(psi_minimal_section(soc, 3.0), 7.0);
  EXPECT_EQ(psi_minimal_section(soc, -1.0), 0.0);
  const auto fd = PsiGraph::fast_diffusion(0.5);
  EXPECT_DOUBLE_EQ(psi_minimal_section(fd, 4.0), 2.0);
  EXPECT_DOUBLE_EQ(psi_minimal_section(fd, -4.0), -2.0);
  const Interval at0 = psi_values(soc, 0.0);
  EXPECT_EQ(at0.lo, 0.0);
  EXPECT_EQ(at0.hi, 1.0);
}

TEST(Section, OddExtension) {
  const auto soc = PsiGraph::soc(1.0, 2.0, true);
  EXPECT_DOUBLE_EQ(psi_minimal_section(soc, -3.0), -7.0);
  const Interval at0 = psi_values(soc, 0.0);
  EXPECT_EQ(at0.lo, -1.0);
  EXPECT_EQ(at0.hi, 1.0);
}

TEST(Graph, FactoriesValidate) {
  EXPECT_THROW(PsiGraph::soc(-1.0, 0.0), ParameterError);
  EXPECT_THROW(PsiGraph::fast_diffusion(0.0), ParameterError);
  EXPECT_THROW(PsiGraph::fast_diffusion(1.0), ParameterError);
  EXPECT_THROW(PsiGraph::power_plus_linear(1.0, 0.5, 0.0), ParameterError);
  EXPECT_THROW(PsiGraph::linear(-1.0), ParameterError);
}

TEST(Graph, MonotoneAndContainsZero) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (const auto& g : random_graphs(rng)) {
    const Interval z = psi_values(g, 0.0);
    EXPECT_LE(z.lo, 0.0);
    EXPECT_GE(z.hi, 0.0);
    for (int i = 0; i < 1000; ++i) {
      double s = u(rng), t = u(rng);
      if (s > t) std::swap(s, t);
      EXPECT_LE(psi_values(g, s).hi, psi_values(g, t).lo + 1e-15);
    }
  }
}

TEST(Resolvent, Examples) {
  const auto soc = PsiGraph::soc(1.0, 0.0);
  EXPECT_DOUBLE_EQ(resolvent(soc, 1.0, 2.0), 1.0);
  EXPECT_EQ(resolvent(soc, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(resolvent(soc, 1.0, -3.0), -3.0);
  const auto lin = PsiGraph::linear(2.5);
  for (double z : {-3.0, 0.0, 0.7, 10.0}) EXPECT_NEAR(resolvent(lin, 0.4, z), z / (1.0 + 0.4 * 2.5), 1e-15);
  EXPECT_NEAR(resolvent(PsiGraph::fast_diffusion(0.5), 1.0, 2.0), 1.0, 1e-14);
}

TEST(Resolvent, InclusionAndOracle) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_incl = 0.0, worst_oracle = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto graphs = random_graphs(rng);
    const auto& g = graphs[static_cast<std::size_t>(i) % graphs.size()];
    const double c = std::pow(10.0, -3.0 + 4.0 * u(rng));
    const double z = (u(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, -4.0 + 6.0 * u(rng));
    const double v = resolvent(g, c, z);
    worst_incl = std::max(worst_incl, inclusion_distance(g, c, z, v) / std::max(1.0, std::abs(z)));
    worst_oracle = std::max(worst_oracle, std::abs(v - bisection_resolvent(g, c, z)));
  }
  EXPECT_LE(worst_incl, 1e-10);
  EXPECT_LE(worst_oracle, 1e-10);
}

TEST(Resolvent, NonexpansiveAndSignPreserving) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-10.0, 10.0), uc(0.01, 5.0);
  for (const auto& g : random_graphs(rng)) {
    for (int i = 0; i < 2000; ++i) {
      const double c = uc(rng), z1 = u(rng), z2 = u(rng);
      const double v1 = resolvent(g, c, z1), v2 = resolvent(g, c, z2);
      EXPECT_LE(std::abs(v1 - v2), std::abs(z1 - z2) * (1 + 1e-12) + 1e-14);
      if (z1 > z2) {
        EXPECT_GE(v1, v2 - 1e-14);
      }
      EXPECT_TRUE(v1 == 0.0 || (v1 > 0.0) == (z1 > 0.0));
    }
    EXPECT_EQ(resolvent(g, 1.0, 0.0), 0.0);
  }
}

TEST(Resolvent, DerivativeMatchesDifferenceQuotient) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (const auto& g : random_graphs(rng)) {
    for (int i = 0; i < 200; ++i) {
      const double z = u(rng), c = 0.3, dz = 1e-6;
      const double dq = (resolvent(g, c, z + dz) - resolvent(g, c, z - dz)) / (2 * dz);
      const double d = resolvent_derivative(g, c, z);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      // skip the kinks of the SOC resolvent
      if (g.kind == PsiKind::soc && (std::abs(z) < 1e-4 || std::abs(std::abs(z) - c * g.theta1) < 1e-4)) continue;
      EXPECT_NEAR(d, dq, 1e-5);
    }
  }
}

TEST(Yosida, Examples) {
  EXPECT_NEAR(yosida(PsiGraph::linear(1.0), 1.0, 3.0), 1.5, 1e-15);
  EXPECT_NEAR(yosida(PsiGraph::soc(1.0, 0.0), 1.0, 0.5), 0.5, 1e-15);
  std::mt19937_64 rng(15);
  for (const auto& g : random_graphs(rng)) EXPECT_EQ(yosida(g, 0.1, 0.0), 0.0);
  EXPECT_THROW(yosida(PsiGraph::linear(1.0), 0.0, 1.0), DomainError);
}

TEST(Yosida, LipschitzSelectionAndConvergence) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (const auto& g : random_graphs(rng)) {
    for (double delta : {1e-1, 1e-2}) {
      for (int i = 0; i < 500; ++i) {
        const double s = u(rng), t = u(rng);
        EXPECT_LE(std::abs(yosida(g, delta, s) - yosida(g, delta, t)), std::abs(s - t) / delta * (1 + 1e-10) + 1e-12);
        const double y = yosida(g, delta, s);
        const Interval iv = psi_values(g, resolvent(g, delta, s));
        EXPECT_GE(y, iv.lo - 1e-9 * std::max(1.0, std::abs(y)));
        EXPECT_LE(y, iv.hi + 1e-9 * std::max(1.0, std::abs(y)));
      }
    }
    // monotone convergence to the minimal section at continuity points
    for (double s : {-1.7, 0.4, 2.2}) {
      if (g.kind == PsiKind::soc && s < 0.0 && !g.odd_extend) continue;
      double prev = std::numeric_limits<double>::infinity();
      for (double delta : {1e-1, 1e-2, 1e-3}) {
        const double err = std::abs(yosida(g, delta, s) - psi_minimal_section(g, s));
        EXPECT_LE(err, prev + 1e-12);
        prev = err;
      }
    }
  }
}

TEST(ConditionP, Examples) {
  const auto grid = default_sample_grid();
  EXPECT_TRUE(check_condition_P(PsiGraph::soc(1.0, 2.0), 3.0, 2.0, 1.0, 2.0, 0.0, grid).pass);
  EXPECT_TRUE(check_condition_P(PsiGraph::fast_diffusion(0.5), 1.0, 1.5, 1.0, 0.0, 0.5, grid).pass);
  const auto bad = check_condition_P(PsiGraph::fast_diffusion(0.5), 1.0, 1.5, 1.0, 1.0, 0.5, grid);
  EXPECT_FALSE(bad.pass);
  EXPECT_FALSE(bad.violations.empty());
  const auto soc = check_condition_P(PsiGraph::soc(1.0, 1.0), 2.0, 2.0, 1.0, 1.0, 0.0, grid);
  EXPECT_TRUE(soc.odd_extended_for_check);
}

TEST(StrongMonotone, Examples) {
  const auto pairs = default_sample_pairs();
  EXPECT_TRUE(check_strong_monotone(PsiGraph::power_plus_linear(1.0, 0.5, 2.0), 2.0, pairs).pass);
  EXPECT_TRUE(check_strong_monotone(PsiGraph::linear(2.0), 2.0, pairs).pass);
  EXPECT_FALSE(check_strong_monotone(PsiGraph::linear(2.0), 2.1, pairs).pass);
  EXPECT_FALSE(check_strong_monotone(PsiGraph::fast_diffusion(0.5), 0.1, pairs).pass);
  EXPECT_THROW(check_strong_monotone(PsiGraph::soc(1.0, 1.0), 0.5, pairs), UnsupportedError);
}
