#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "extinction/noise.hpp"

using namespace extinction;

namespace {

std::shared_ptr<const OperatorSpec> interval(int modes) {
  return std::make_shared<OperatorSpec>(build_operator(1, 1.0, {1.0}, modes));
}

std::vector<double> random_field(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = g(rng) / static_cast<double>(k + 1);
  return a;
}

// ||B(x)||_HS^2 by summing ||B(x) e_j||_H^2 over unit increments.
double hs_by_columns(const NoiseModel& model, const OperatorSpec& op, const std::vector<double>& x) {
  auto ws = model.make_workspace();
  std::vector<double> dW(model.increments(), 0.0), out(op.size());
  double s = 0.0;
  for (std::size_t j = 0; j < dW.size(); ++j) {
    std::fill(dW.begin(), dW.end(), 0.0);
    dW[j] = 1.0;
    model.increment(x, dW, out, ws);
    s += h_norm_sq(out, op.lambda);
  }
  return s;
}

}  // namespace

TEST(ApplyNoise, RankOneIsScalarMultiple) {
  const auto op = interval(8);
  std::mt19937_64 rng(21);
  SpectralField x{random_field(rng, op->size()), op};
  const auto inc = apply_noise(NoiseSpec::rank_one(0.7), x, std::vector<double>{0.3});
  for (std::size_t k = 0; k < x.coeffs.size(); ++k) EXPECT_NEAR(inc.coeffs[k], 0.7 * 0.3 * x.coeffs[k], 1e-15);
}

TEST(ApplyNoise, DiagonalSquareOfFirstMode) {
  const auto op = interval(16);
  std::vector<double> mu(16, 0.0);
  mu[0] = 1.0;
  SpectralField e1{std::vector<double>(16, 0.0), op};
  e1.coeffs[0] = 1.0;
  std::vector<double> dW(16, 0.0);
  dW[0] = 0.25;
  const auto inc = apply_noise(NoiseSpec::diagonal(MuRule::list(mu)), e1, dW, 64);
  EXPECT_NEAR(inc.coeffs[1], 0.0, 1e-14);
  // <e1^2, e1> = 8 sqrt2 / (3 pi); e1^2 is not a sine polynomial, so the grid product aliases slightly
  EXPECT_NEAR(inc.coeffs[0], 0.25 * 8.0 * std::sqrt(2.0) / (3.0 * kPi), 1e-6);
}

TEST(ApplyNoise, ZeroCoefficientsGiveZero) {
  const auto op = interval(8);
  std::mt19937_64 rng(22);
  SpectralField x{random_field(rng, 8), op};
  const auto inc = apply_noise(NoiseSpec::diagonal(MuRule::list(std::vector<double>(8, 0.0))), x,
                               std::vector<double>(8, 1.0));
  for (double v : inc.coeffs) EXPECT_EQ(v, 0.0);
}

TEST(ApplyNoise, DimensionMismatch) {
  const auto op = interval(8);
  SpectralField x{std::vector<double>(8, 1.0), op};
  EXPECT_THROW(apply_noise(NoiseSpec::rank_one(1.0), x, std::vector<double>{1.0, 2.0}), ParameterError);
  SpectralField bad{std::vector<double>(5, 1.0), op};
  EXPECT_THROW(apply_noise(NoiseSpec::rank_one(1.0), bad, std::vector<double>{1.0}), ParameterError);
}

TEST(ApplyNoise, Linearity) {
  const auto op = interval(12);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  for (const auto& spec : {NoiseSpec::diagonal(MuRule::powerlaw(0.3, 1.5)), NoiseSpec::uncoloured(0.4),
                           NoiseSpec::rank_one(0.9), NoiseSpec::finite_mode({0.5, 1.0, 2.0})}) {
    for (int trial = 0; trial < 20; ++trial) {
      SpectralField x{random_field(rng, 12), op}, y{random_field(rng, 12), op};
      SpectralField xy{std::vector<double>(12), op};
      for (std::size_t k = 0; k < 12; ++k) xy.coeffs[k] = x.coeffs[k] + y.coeffs[k];
      const std::size_t m = spec.kind == NoiseKind::rank_one ? 1 : (spec.kind == NoiseKind::finite_mode ? 3 : 12);
      std::vector<double> d1(m), d2(m), d12(m);
      for (std::size_t j = 0; j < m; ++j) {
        d1[j] = g(rng);
        d2[j] = g(rng);
        d12[j] = d1[j] + d2[j];
      }
      const auto a = apply_noise(spec, x, d12), b1 = apply_noise(spec, x, d1), b2 = apply_noise(spec, x, d2);
      const auto c = apply_noise(spec, xy, d1), c1 = apply_noise(spec, y, d1);
      for (std::size_t k = 0; k < 12; ++k) {
        EXPECT_NEAR(a.coeffs[k], b1.coeffs[k] + b2.coeffs[k], 1e-12);
        EXPECT_NEAR(c.coeffs[k], b1.coeffs[k] + c1.coeffs[k], 1e-12);
      }
    }
  }
}

TEST(Rho3, Examples) {
  const auto op = interval(8);
  EXPECT_NEAR(rho3(NoiseSpec::rank_one(0.3), op).value, 0.045, 1e-16);
  EXPECT_DOUBLE_EQ(rho3(NoiseSpec::finite_mode({1.0, 2.0, 0.5}), op).value, 2.0);
  EXPECT_EQ(rho3(NoiseSpec::diagonal(MuRule::list(std::vector<double>(8, 0.0))), op).value, 0.0);
  EXPECT_EQ(rho3(NoiseSpec::none(), op).value, 0.0);
  EXPECT_DOUBLE_EQ(rho3(NoiseSpec::mixed(1.0, 2.0), op).value, 2.5);
  EXPECT_FALSE(rho3(NoiseSpec::uncoloured(1.0), op).applicable);
}

TEST(Rho3, EigenOracle) {
  const auto op = interval(16);
  const auto spec = NoiseSpec::diagonal(MuRule::powerlaw(0.05, 2.0));
  const auto res = rho3(spec, op);
  // independent assembly: A = sum_j mu_j^2 T_j^T Lambda^{-1} T_j on the same grid
  const int N = 16, G = 16;
  Eigen::MatrixXd E(G, N);
  for (int g = 0; g < G; ++g)
    for (int k = 0; k < N; ++k) E(g, k) = std::sqrt(2.0) * std::sin(kPi * (k + 1) * (g + 1) / (G + 1.0));
  const double w = 1.0 / (G + 1.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd Linv = Eigen::MatrixXd::Zero(N, N);
  for (int k = 0; k < N; ++k) Linv(k, k) = 1.0 / op->lambda[static_cast<std::size_t>(k)];
  for (int j = 0; j < N; ++j) {
    Eigen::MatrixXd Tj(N, N);
    for (int k = 0; k < N; ++k)
      for (int m = 0; m < N; ++m) Tj(m, k) = w * (E.col(j).array() * E.col(k).array() * E.col(m).array()).sum();
    const double mu = 0.05 / ((j + 1.0) * (j + 1.0));
    A += mu * mu * Tj.transpose() * Linv * Tj;
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(A, Linv);
  const double oracle = 0.5 * solver.eigenvalues().maxCoeff();
  EXPECT_NEAR(res.value, oracle, 1e-9 * oracle);
  EXPECT_TRUE(res.converged);
  ASSERT_TRUE(res.half_truncation_value.has_value());
}

TEST(Rho3, UpperBoundAndWitness) {
  const auto op = interval(16);
  const auto spec = NoiseSpec::diagonal(MuRule::powerlaw(0.05, 2.0));
  const auto res = rho3(spec, op);
  auto tr = std::make_shared<SineTransform>(*op, default_grid_size(*op));
  NoiseModel model(spec, op, tr, true);
  std::mt19937_64 rng(24);
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_field(rng, op->size());
    EXPECT_LE(0.5 * hs_by_columns(model, *op, x) / h_norm_sq(x, op->lambda), res.value + 1e-8);
  }
  const double achieved = 0.5 * hs_by_columns(model, *op, res.witness) / h_norm_sq(res.witness, op->lambda);
  EXPECT_NEAR(achieved, res.value, 1e-6 * res.value);
  EXPECT_NEAR(model.hs_norm_sq(res.witness), hs_by_columns(model, *op, res.witness), 1e-12);
}

TEST(Rho3, DivergentSummabilityWarns) {
  const auto op = interval(16);
  const auto res = rho3(NoiseSpec::diagonal(MuRule::powerlaw(1.0, 0.0)), op);
  EXPECT_FALSE(res.converged);
  EXPECT_FALSE(res.warnings.empty());
}

TEST(ConditionT, Examples) {
  const auto op = interval(64);
  const auto pass = check_condition_T(MuRule::powerlaw(1.0, 2.0), *op, 0.4);
  EXPECT_TRUE(pass.pass);
  EXPECT_DOUBLE_EQ(pass.exponent, 1.4);
  ASSERT_TRUE(pass.supremal_epsilon.has_value());
  EXPECT_NEAR(*pass.supremal_epsilon, 0.5, 1e-12);
  EXPECT_FALSE(check_condition_T(MuRule::powerlaw(1.0, 0.0), *op, 0.4).pass);
  EXPECT_TRUE(check_condition_T(MuRule::list({1.0, 2.0, 3.0}), *op, 0.4).pass);
  EXPECT_THROW(check_condition_T(MuRule::list({1.0, 2.0}, true), *op, 0.4), UndecidableError);
  EXPECT_THROW(check_condition_T(MuRule::powerlaw(1.0, 2.0), *op, 0.0), DomainError);
}

TEST(Rho0, Examples) {
  const auto op = interval(8);
  EXPECT_NEAR(rho0_uncoloured(*op, 1.0).value, 1.0 / 6.0, 1e-15);
  EXPECT_EQ(rho0_uncoloured(*op, 0.0).value, 0.0);
  EXPECT_NEAR(rho0_uncoloured(*op, std::sqrt(3.0)).value, 0.5, 1e-15);
  const auto square = build_operator(2, 1.0, {1.0, 1.0}, 4);
  const auto inf = rho0_uncoloured(square, 1.0);
  EXPECT_FALSE(inf.finite);
  EXPECT_TRUE(std::isinf(inf.value));
}

TEST(Rho0, PartialSumsApproachClosedForm) {
  // oracle: partial sums plus the integral tail bound sum_{k>K} 1/k^2 in [1/(K+1), 1/K]
  const double closed = rho0_uncoloured(*interval(4), 1.0).value;
  for (int K : {10, 100, 1000}) {
    double partial = 0.0;
    for (int k = 1; k <= K; ++k) partial += 0.5 * 2.0 / (kPi * kPi * k * k);
    const double lo = partial + 1.0 / (kPi * kPi * (K + 1.0));
    const double hi = partial + 1.0 / (kPi * kPi * K);
    EXPECT_GE(closed, lo - 1e-15);
    EXPECT_LE(closed, hi + 1e-15);
  }
  const auto op = interval(3);
  const auto tab = rho0_uncoloured(*op, 1.0, std::vector<double>{2.0, 2.0, 2.0});
  EXPECT_TRUE(tab.tail_unknown);
  EXPECT_NEAR(tab.value, (1.0 + 0.25 + 1.0 / 9.0) / (kPi * kPi), 1e-15);
}

TEST(QvEnvelope, Examples) {
  const auto r1 = qv_envelope(NoiseSpec::rank_one(1.0));
  EXPECT_EQ(r1.c1, 4.0);
  EXPECT_EQ(r1.c2, 4.0);
  const auto fm = qv_envelope(NoiseSpec::finite_mode({1.0, 1.0}));
  EXPECT_DOUBLE_EQ(fm.c1, 2.0);
  EXPECT_DOUBLE_EQ(fm.c2, 8.0);
  const auto one = qv_envelope(NoiseSpec::finite_mode({1.0}));
  EXPECT_DOUBLE_EQ(one.c1, 4.0);
  EXPECT_DOUBLE_EQ(one.c2, 4.0);
  const auto deg = qv_envelope(NoiseSpec::finite_mode({1.0, 0.0}));
  EXPECT_TRUE(deg.degenerate);
  EXPECT_EQ(deg.c1, 0.0);
  EXPECT_THROW(qv_envelope(NoiseSpec::diagonal(MuRule::powerlaw(1.0, 2.0))), UnsupportedError);
}

TEST(QvEnvelope, FiniteModeSandwich) {
  const auto op = interval(10);
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> mu{u(rng), u(rng), u(rng)};
    const auto spec = NoiseSpec::finite_mode(mu);
    const auto env = qv_envelope(spec);
    EXPECT_LE(env.c1, env.c2);
    NoiseModel model(spec, op, nullptr);
    for (int i = 0; i < 1000; ++i) {
      const auto x = random_field(rng, op->size());
      const auto m = model.martingale_coefficients(x);
      double rate = 0.0;
      for (double v : m) rate += v * v;
      const double h4 = std::pow(h_norm_sq(x, op->lambda), 2);
      EXPECT_GE(rate, env.c1 * h4 * (1 - 1e-12));
      EXPECT_LE(rate, env.c2 * h4 * (1 + 1e-12));
    }
  }
}

TEST(Martingale, CoefficientsMatchIncrement) {
  const auto op = interval(10);
  auto tr = std::make_shared<SineTransform>(*op, 10);
  std::mt19937_64 rng(26);
  std::normal_distribution<double> g;
  for (const auto& spec : {NoiseSpec::diagonal(MuRule::powerlaw(0.3, 1.0)), NoiseSpec::rank_one(0.5),
                           NoiseSpec::finite_mode({0.5, 1.5})}) {
    NoiseModel model(spec, op, tr, true);
    auto ws = model.make_workspace();
    const auto x = random_field(rng, 10);
    std::vector<double> dW(model.increments()), out(10);
    for (auto& v : dW) v = g(rng);
    model.increment(x, dW, out, ws);
    const auto m = model.martingale_coefficients(x);
    double lhs = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) lhs += m[j] * dW[j];
    EXPECT_NEAR(lhs, 2.0 * h_inner(out, x, op->lambda), 1e-12);
  }
}
