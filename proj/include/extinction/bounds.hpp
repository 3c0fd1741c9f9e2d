#pragma once

// Analytic extinction bounds: the hyperbound constant gamma(theta), the three
// moment/probability bounds driven by it, the diffusion-envelope ratio for
// quadratic quadratic-variation envelopes, and their SOC / fast-diffusion /
// uncoloured-noise specialisations.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "extinction/errors.hpp"
#include "extinction/spectral.hpp"

namespace extinction {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Exponent p' = d(1-r)/(2(1+r)) of t in the interpolated heat bound.
inline double heat_exponent(double r, double d) { return d * (1.0 - r) / (2.0 * (1.0 + r)); }

/// gamma(theta) < inf exactly when theta p' < 1.
inline bool gamma_is_finite(double theta, double r, double d) { return theta * heat_exponent(r, d) < 1.0; }

/// (0, hi) intersected with (0, 1]; `closed` when the right end 1 is included.
struct ThetaInterval {
  double hi = 1.0;
  bool closed = true;
  double r = 0.0;
  double d = 1.0;
  bool contains(double theta) const { return theta > 0.0 && theta <= 1.0 && gamma_is_finite(theta, r, d); }
};

inline ThetaInterval admissible_thetas(double r, double d) {
  if (!(r >= 0.0 && r < 1.0)) throw DomainError("admissible_thetas: r must lie in [0,1)");
  if (!(d > 0.0)) throw DomainError("admissible_thetas: d must be positive");
  ThetaInterval out;
  out.r = r;
  out.d = d;
  const double edge = 1.0 / heat_exponent(r, d);
  if (gamma_is_finite(1.0, r, d)) {
    out.hi = 1.0;
    out.closed = true;
  } else {
    out.hi = std::min(edge, 1.0);
    out.closed = false;
  }
  return out;
}

/// theta grid of `count` points spread over the admissible interval.
inline std::vector<double> theta_grid(const ThetaInterval& iv, int count) {
  std::vector<double> g;
  const int denom = iv.closed ? count : count + 1;
  for (int i = 1; i <= count; ++i) g.push_back(iv.hi * static_cast<double>(i) / denom);
  return g;
}

namespace detail {
inline void check_theta_r(double theta, double r) {
  if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("theta must lie in (0,1]");
  if (!(r >= 0.0 && r < 1.0)) throw DomainError("r must lie in [0,1)");
}
}  // namespace detail

/// gamma(theta) = int_0^inf e^{-lambda1 (1-theta) t} ||P_t||^theta dt with the
/// interpolated heat bound inserted; a Gamma integral in closed form.
inline double gamma(double theta, double r, double lambda1, double d, double c_inf) {
  detail::check_theta_r(theta, r);
  const double k = theta * heat_exponent(r, d);
  if (k >= 1.0) return kInf;
  const double a = lambda1 * (1.0 - theta) + theta * lambda1 * (1.0 - r) / (1.0 + r);
  return std::pow(c_inf, -k) * std::tgamma(1.0 - k) * std::pow(a, -(1.0 - k));
}

inline double gamma(double theta, double r, const OperatorSpec& op) {
  return gamma(theta, r, op.lambda1, op.d_eff, op.c_inf);
}

/// Same integral by adaptive Gauss-Kronrod after t = u^{1/(1-k)}, which
/// removes the t^{-k} singularity at the origin.
inline double gamma_quadrature(double theta, double r, double lambda1, double d, double c_inf) {
  detail::check_theta_r(theta, r);
  const double k = theta * heat_exponent(r, d);
  if (k >= 1.0) return kInf;
  const double e = 1.0 / (1.0 - k);
  auto f = [&](double u) {
    const double t = std::pow(u, e);
    // t underflows near u = 0, where the transformed integrand tends to e c_inf^{-k}
    if (!(t > 0.0)) return e * std::pow(c_inf, -k);
    const double jac = e * std::pow(u, e - 1.0);
    const double h = heat_norm_bound(t, r, lambda1, d, c_inf);
    return std::exp(-lambda1 * (1.0 - theta) * t) * std::pow(h, theta) * jac;
  };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kInf, 15, 1e-10, &err);
}

inline double gamma_quadrature(double theta, double r, const OperatorSpec& op) {
  return gamma_quadrature(theta, r, op.lambda1, op.d_eff, op.c_inf);
}

// ---------------------------------------------------------------------------
// Extinction bounds

struct BoundInputs {
  double r = 0.0;
  double theta = 1.0;
  double rho1 = 1.0;
  double rho2 = 0.0;
  double rho3 = 0.0;
  double lambda1 = kPi * kPi;
  double gamma_theta = 0.0;
  double x_moment = 0.0;  // E ||X0||_H^{theta(1-r)}
  double beta = 0.0;
};

struct CaseFlags {
  bool case1 = false;
  bool case2 = false;
  bool case3 = false;
  double beta_max = 0.0;  // upper end of the case-2 beta range (0 when empty)
  std::string case1_reason, case2_reason, case3_reason;
};

namespace detail {
inline bool nearly_equal(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

// rho2^{1-theta} with rho2^{1-theta} := 1 for theta = 1
inline double pow_one_minus_theta(double base, double theta) { return theta == 1.0 ? 1.0 : std::pow(base, 1.0 - theta); }

inline double lambda_factor(const BoundInputs& in) {
  return std::pow(in.lambda1, (1.0 - in.r) * (1.0 - in.theta) / 2.0);
}
}  // namespace detail

inline CaseFlags case_flags(const BoundInputs& in) {
  CaseFlags f;
  const bool finite = std::isfinite(in.gamma_theta);
  if (!finite) {
    f.case1_reason = f.case2_reason = f.case3_reason = "gamma(theta) is infinite for this theta";
    return f;
  }
  f.case1 = in.rho2 > 0.0 || (in.rho2 == 0.0 && in.theta == 1.0);
  if (!f.case1) f.case1_reason = "needs rho2 > 0, or rho2 = 0 with theta = 1";
  if (in.rho3 < in.lambda1 * in.rho2) {
    f.beta_max = in.theta * (1.0 - in.r) * (in.rho2 * in.lambda1 - in.rho3);
    f.case2 = in.beta > 0.0 && in.beta < f.beta_max;
    if (!f.case2) f.case2_reason = "beta outside (0, theta(1-r)(rho2 lambda1 - rho3))";
  } else {
    f.case2_reason = "needs rho3 < lambda1 rho2";
  }
  f.case3 = in.theta == 1.0 && detail::nearly_equal(in.rho3, in.lambda1 * in.rho2);
  if (!f.case3) f.case3_reason = "needs rho3 = lambda1 rho2 and theta = 1";
  return f;
}

struct ProbabilityBound {
  double raw = 0.0;
  double clamped = 0.0;
  std::string interpretation;
};

inline ProbabilityBound make_probability(double raw, std::string interpretation) {
  return {raw, std::clamp(raw, 0.0, 1.0), std::move(interpretation)};
}

/// P(tau0 = inf) <= 1 - E e^{-theta(1-r) rho3 tau0} <= raw.
inline ProbabilityBound thm21_case1(const BoundInputs& in) {
  detail::check_theta_r(in.theta, in.r);
  const auto f = case_flags(in);
  if (!f.case1) throw CaseError("case 1: " + f.case1_reason);
  const double denom = std::pow(in.rho1, in.theta) * detail::pow_one_minus_theta(in.rho2, in.theta) *
                       detail::lambda_factor(in);
  const double raw = in.rho3 * std::pow(in.gamma_theta, (1.0 + in.r) / 2.0) * in.x_moment / denom;
  return make_probability(raw, "bounds P(tau0 = inf) via 1 - E exp(-theta(1-r) rho3 tau0)");
}

struct MomentBound {
  double value = 0.0;
  double beta_max = 0.0;
  double alpha_beta = 0.0;
};

/// E e^{beta tau0} bound for beta in (0, theta(1-r)(rho2 lambda1 - rho3)).
inline MomentBound thm21_case2(const BoundInputs& in) {
  detail::check_theta_r(in.theta, in.r);
  const auto f = case_flags(in);
  if (!std::isfinite(in.gamma_theta)) throw CaseError("case 2: " + f.case2_reason);
  if (!(in.rho3 < in.lambda1 * in.rho2)) throw CaseError("case 2: needs rho3 < lambda1 rho2");
  if (!f.case2)
    throw DomainError("case 2: beta must lie in (0, " + std::to_string(f.beta_max) + ")");
  MomentBound out;
  out.beta_max = f.beta_max;
  const double tr = in.theta * (1.0 - in.r);
  out.alpha_beta = in.rho2 - (in.beta / tr + in.rho3) / in.lambda1;
  const double denom = tr * std::pow(in.rho1, in.theta) * detail::pow_one_minus_theta(out.alpha_beta, in.theta) *
                       detail::lambda_factor(in);
  out.value = 1.0 + in.beta * std::pow(in.gamma_theta, (1.0 + in.r) / 2.0) * in.x_moment / denom;
  return out;
}

/// E tau0 bound when rho3 = lambda1 rho2 and theta = 1.
inline double thm21_case3(const BoundInputs& in) {
  detail::check_theta_r(in.theta, in.r);
  if (!std::isfinite(in.gamma_theta))
    throw CaseError("case 3: gamma(1) is infinite; r must exceed (n - 2 alpha)/(n + 2 alpha)");
  const auto f = case_flags(in);
  if (!f.case3) throw CaseError("case 3: " + f.case3_reason);
  return std::pow(in.gamma_theta, (1.0 + in.r) / 2.0) * in.x_moment / ((1.0 - in.r) * in.rho1);
}

// ---------------------------------------------------------------------------
// Envelope ratio for quadratic envelopes g_i(s) = c_i s^2

struct Thm22Result {
  double ratio = 0.0;
  bool f_infinite = false;  // F(inf) = inf, so P(tau0 = inf) = 0
  double s_star = kInf;     // sign change of xi
  double tail_exponent = 0.0;  // integrand ~ t^{-tail_exponent} at infinity
};

struct Thm22Inputs {
  double x_H2 = 0.0;
  double rho1 = 1.0;
  double rho2 = 0.0;
  double rho3 = 0.0;
  double theta = 1.0;
  double r = 0.0;
  double lambda1 = kPi * kPi;
  double gamma_theta = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

/// P(tau0 = inf) <= F(||x||_H^2)/F(inf), F(s) = int_0^s exp(2 int_1^t xi/g du) dt,
/// xi(s) = K s^{1 - kappa} - rho3 s with kappa = theta(1-r)/2. With quadratic
/// g the inner integral is elementary; F(inf) diverges iff c1 >= 2 rho3.
inline Thm22Result thm22_ratio(const Thm22Inputs& in) {
  detail::check_theta_r(in.theta, in.r);
  if (!(in.rho2 > 0.0 || (in.rho2 == 0.0 && in.theta == 1.0)))
    throw CaseError("envelope bound: needs rho2 > 0, or rho2 = 0 with theta = 1");
  if (!std::isfinite(in.gamma_theta)) throw CaseError("envelope bound: gamma(theta) is infinite");
  if (!(in.c1 > 0.0)) throw CaseError("envelope bound: lower envelope degenerate (c1 = 0)");
  if (in.c2 < in.c1) throw ParameterError("envelope bound: needs c2 >= c1");
  if (!(in.x_H2 >= 0.0)) throw ParameterError("envelope bound: ||x||_H^2 must be >= 0");
  Thm22Result out;
  out.tail_exponent = 2.0 * in.rho3 / in.c1;
  const double kappa = in.theta * (1.0 - in.r) / 2.0;
  const double K = std::pow(in.rho1, in.theta) * detail::pow_one_minus_theta(in.rho2, in.theta) *
                   std::pow(in.lambda1, (1.0 - in.r) * (1.0 - in.theta) / 2.0) *
                   std::pow(in.gamma_theta, -(1.0 + in.r) / 2.0);
  if (in.rho3 > 0.0) out.s_star = std::pow(K / in.rho3, 1.0 / kappa);
  if (in.x_H2 == 0.0) return out;
  if (in.c1 >= 2.0 * in.rho3) {
    out.f_infinite = true;
    out.ratio = 0.0;
    return out;
  }
  // Continuous antiderivative of xi/g: c2 below s*, c1 above.
  const double s_star = out.s_star;
  auto phi = [&](double u, double c) { return -(K / (c * kappa)) * std::pow(u, -kappa) - (in.rho3 / c) * std::log(u); };
  const double shift = phi(s_star, in.c2) - phi(s_star, in.c1);
  auto P = [&](double u) { return u <= s_star ? phi(u, in.c2) : phi(u, in.c1) + shift; };
  const double p1 = P(1.0);
  const double i_max = 2.0 * (P(s_star) - p1);
  auto integrand = [&](double t) {
    if (t <= 0.0) return 0.0;
    return std::exp(2.0 * (P(t) - p1) - i_max);
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  auto head = [&](double b) { return GK::integrate(integrand, 0.0, b, 15, 1e-11); };
  // tail in y = ln t: integrand e^{I(e^y) + y}, decaying like e^{(1 - 2 rho3/c1) y}
  auto tail_from = [&](double a) {
    const double ya = std::log(a);
    auto g = [&](double z) {
      const double t = std::exp(ya + z);
      if (!std::isfinite(t)) return 0.0;
      return std::exp(2.0 * (P(t) - p1) - i_max + ya + z);
    };
    return GK::integrate(g, 0.0, kInf, 15, 1e-11);
  };
  const double total = head(s_star) + tail_from(s_star);
  double part;
  if (in.x_H2 <= s_star) part = head(in.x_H2);
  else part = total - tail_from(in.x_H2);
  out.ratio = std::clamp(part / total, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Inequalities

/// sqrt(gamma) ||x||_2^{1-theta} ||x||_{1+r}^theta - ||x||_H; nonnegative by the interpolation lemma.
inline double lemma23_slack(const SpectralField& x, double theta, double r, double gamma_theta,
                            const SineTransform& transform) {
  detail::check_theta_r(theta, r);
  const double l2 = l2_norm(x);
  const double lp = lp_norm(x, 1.0 + r, transform);
  const double rhs = std::sqrt(gamma_theta) * (theta == 1.0 ? 1.0 : std::pow(l2, 1.0 - theta)) * std::pow(lp, theta);
  return rhs - h_norm(x);
}

/// b^{(1-theta)/theta} + a/b >= a^{1-theta}, with a^{1-theta} := 1 for theta = 1.
inline bool lemma24(double a, double b, double theta) {
  if (!(b > 0.0) || !(a >= 0.0)) throw DomainError("lemma24: needs a >= 0, b > 0");
  if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("lemma24: theta must lie in (0,1]");
  const double lhs = std::pow(b, (1.0 - theta) / theta) + a / b;
  const double rhs = theta == 1.0 ? 1.0 : std::pow(a, 1.0 - theta);
  return lhs >= rhs;
}

// ---------------------------------------------------------------------------
// Specialisations

struct ThetaInfimum {
  double value = 0.0;
  double argmin = 1.0;
  double curvature = 0.0;  // second difference at the argmin
  std::vector<std::pair<double, double>> table;  // (theta, bound) on the grid
};

/// inf over admissible theta of a positive function: 512-point grid, then golden section.
inline ThetaInfimum infimum_over_theta(const ThetaInterval& iv, const std::function<double(double)>& f,
                                       int grid_points = 512) {
  ThetaInfimum out;
  const auto grid = theta_grid(iv, grid_points);
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = f(grid[i]);
    out.table.emplace_back(grid[i], v);
    if (v < out.table[best].second) best = i;
  }
  double a = best > 0 ? grid[best - 1] : grid[best] * 0.5;
  double b = best + 1 < grid.size() ? grid[best + 1] : grid[best];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && b - a > 1e-13 * b; ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a); f1 = f(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a); f2 = f(x2);
    }
  }
  const double xm = 0.5 * (a + b);
  out.argmin = xm;
  out.value = f(xm);
  if (out.table[best].second < out.value) {
    out.argmin = out.table[best].first;
    out.value = out.table[best].second;
  }
  const double step = iv.hi / (4.0 * grid_points);
  const double lo = out.argmin - step, hi = out.argmin + step;
  if (lo > 0.0 && iv.contains(hi)) out.curvature = (f(hi) - 2.0 * out.value + f(lo)) / (step * step);
  return out;
}

/// Deterministic Zhang model (r = 0): tau0 <= inf_theta gamma(theta)^{1/2} ||x0||_H^theta /
/// (theta theta1^theta theta2^{1-theta} lambda1^{(1-theta)/2}).
inline ThetaInfimum zhang_deterministic_bound(double x_H, double theta1, double theta2, double lambda1,
                                              const std::function<double(double)>& gamma_fn, double d) {
  if (!(theta1 > 0.0 && theta2 > 0.0)) throw ParameterError("zhang bound: theta1, theta2 must be positive");
  if (!(x_H >= 0.0)) throw ParameterError("zhang bound: ||x0||_H must be >= 0");
  const auto iv = admissible_thetas(0.0, d);
  auto f = [&](double th) {
    return std::sqrt(gamma_fn(th)) * std::pow(x_H, th) /
           (th * std::pow(theta1, th) * std::pow(theta2, 1.0 - th) * std::pow(lambda1, (1.0 - th) / 2.0));
  };
  if (x_H == 0.0) {
    ThetaInfimum out;
    out.value = 0.0;
    out.argmin = iv.hi;
    return out;
  }
  return infimum_over_theta(iv, f);
}

inline ThetaInfimum zhang_deterministic_bound(double x_H, double theta1, double theta2, const OperatorSpec& op) {
  return zhang_deterministic_bound(
      x_H, theta1, theta2, op.lambda1, [&](double th) { return gamma(th, 0.0, op); }, op.d_eff);
}

struct Threshold {
  double r_star = 0.0;
  double raw = 0.0;
  bool all_r_admissible = false;
};

/// r* = (n - 2 alpha)/(n + 2 alpha); gamma(1) is finite iff r > r*.
inline Threshold fast_diffusion_threshold(int n, double alpha) {
  if (n < 1) throw ParameterError("threshold: n must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("threshold: alpha must lie in (0,1]");
  Threshold t;
  t.raw = (n - 2.0 * alpha) / (n + 2.0 * alpha);
  t.r_star = std::max(t.raw, 0.0);
  t.all_r_admissible = t.raw < 0.0;
  return t;
}

struct TttInputs {
  double r = 0.0;
  double theta = 1.0;
  double theta1 = 1.0;
  double theta2 = 1.0;
  double rho0 = 0.0;
  double kappa = 0.0;
  double lambda1 = kPi * kPi;
  double gamma_theta = 0.0;
  double x_moment = 0.0;
  double beta = 0.0;
};

struct TttBound {
  double value = 0.0;
  double beta_max = 0.0;
  double via_case2 = 0.0;
};

/// Uncoloured linear multiplicative noise with a strongly monotone graph.
/// The effective coercivity is theta2 - rho0; the bound is case 2 with
/// rho1 = theta1, rho2 = theta2 - rho0, rho3 = 0.
inline TttBound thm_ttt_bound(const TttInputs& in) {
  detail::check_theta_r(in.theta, in.r);
  if (!(in.rho0 > 0.0 && in.rho0 <= in.kappa && in.rho0 < in.theta2))
    throw CaseError("uncoloured bound: needs rho0 in (0, kappa] and rho0 < theta2");
  if (!std::isfinite(in.gamma_theta)) throw CaseError("uncoloured bound: gamma(theta) is infinite");
  TttBound out;
  const double tr = in.theta * (1.0 - in.r);
  out.beta_max = tr * (in.theta2 - in.rho0) * in.lambda1;
  if (!(in.beta > 0.0 && in.beta < out.beta_max))
    throw DomainError("uncoloured bound: beta must lie in (0, " + std::to_string(out.beta_max) + ")");
  const double coerc = in.theta2 - in.rho0 - in.beta / (in.lambda1 * tr);
  const double denom = tr * std::pow(in.theta1, in.theta) * detail::pow_one_minus_theta(coerc, in.theta) *
                       std::pow(in.lambda1, (1.0 - in.r) * (1.0 - in.theta) / 2.0);
  out.value = 1.0 + in.beta * std::pow(in.gamma_theta, (1.0 + in.r) / 2.0) * in.x_moment / denom;

  BoundInputs c2;
  c2.r = in.r;
  c2.theta = in.theta;
  c2.rho1 = in.theta1;
  c2.rho2 = in.theta2 - in.rho0;
  c2.rho3 = 0.0;
  c2.lambda1 = in.lambda1;
  c2.gamma_theta = in.gamma_theta;
  c2.x_moment = in.x_moment;
  c2.beta = in.beta;
  out.via_case2 = thm21_case2(c2).value;
  if (std::abs(out.value - out.via_case2) > 1e-12 * std::abs(out.value))
    throw std::logic_error("uncoloured bound disagrees with its case-2 reduction");
  return out;
}

}  // namespace extinction
