#pragma once

// Maximal monotone graphs Psi: R -> 2^R used as the diffusion nonlinearity,
// with their pointwise resolvents (I + c Psi)^{-1}, Yosida approximations and
// diagnostic checks of the growth/coercivity and strong monotonicity conditions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "extinction/errors.hpp"

namespace extinction {

enum class PsiKind {
  soc,                // theta1 H(s) + theta2 s on s >= 0, [0, theta1] at 0, 0 below
  fast_diffusion,     // |s|^r sgn s
  power_plus_linear,  // theta1 |s|^r sgn s + theta2 s
  linear,             // theta2 s
};

inline std::string to_string(PsiKind k) {
  switch (k) {
    case PsiKind::soc: return "soc";
    case PsiKind::fast_diffusion: return "fast_diffusion";
    case PsiKind::power_plus_linear: return "power_plus_linear";
    case PsiKind::linear: return "linear";
  }
  return "unknown";
}

struct PsiGraph {
  PsiKind kind = PsiKind::linear;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double r = 0.0;
  // Replace Psi on (-inf,0) by -Psi(-s). Only meaningful for the SOC graph,
  // whose literal negative branch is identically zero.
  bool odd_extend = false;

  // Structure constants claimed for the growth/coercivity condition and for
  // strong monotonicity (kappa = 0 when it fails).
  double C = 1.0;
  double q = 1.0;
  double kappa = 0.0;

  static PsiGraph soc(double theta1, double theta2, bool odd_extend = false) {
    if (theta1 < 0.0 || theta2 < 0.0) throw ParameterError("soc graph: theta1, theta2 must be >= 0");
    PsiGraph g;
    g.kind = PsiKind::soc;
    g.theta1 = theta1;
    g.theta2 = theta2;
    g.r = 0.0;
    g.odd_extend = odd_extend;
    g.C = theta1 + theta2;
    g.q = theta2 > 0.0 ? 2.0 : 1.0;
    g.kappa = 0.0;
    return g;
  }
  static PsiGraph fast_diffusion(double r) {
    if (!(r > 0.0 && r < 1.0)) throw ParameterError("fast diffusion graph: r must lie in (0,1)");
    PsiGraph g;
    g.kind = PsiKind::fast_diffusion;
    g.theta1 = 1.0;
    g.r = r;
    g.C = 1.0;
    g.q = 1.0 + r;
    return g;
  }
  static PsiGraph power_plus_linear(double theta1, double r, double theta2) {
    if (!(theta1 > 0.0) || !(theta2 > 0.0)) throw ParameterError("power+linear graph: theta1, theta2 must be > 0");
    if (!(r > 0.0 && r < 1.0)) throw ParameterError("power+linear graph: r must lie in (0,1)");
    PsiGraph g;
    g.kind = PsiKind::power_plus_linear;
    g.theta1 = theta1;
    g.theta2 = theta2;
    g.r = r;
    g.C = theta1 + theta2;
    g.q = 2.0;
    g.kappa = theta2;
    return g;
  }
  static PsiGraph linear(double theta2) {
    if (!(theta2 >= 0.0)) throw ParameterError("linear graph: theta2 must be >= 0");
    PsiGraph g;
    g.kind = PsiKind::linear;
    g.theta2 = theta2;
    g.C = theta2;
    g.q = 2.0;
    g.kappa = theta2;
    return g;
  }

  bool multivalued() const noexcept { return kind == PsiKind::soc && theta1 > 0.0; }
};

/// Closed interval [lo, hi]; degenerate for single-valued points.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double y, double tol = 0.0) const noexcept { return y >= lo - tol && y <= hi + tol; }
  double distance(double y) const noexcept { return y < lo ? lo - y : (y > hi ? y - hi : 0.0); }
};

namespace detail {

inline double signed_power(double s, double r) {
  return s >= 0.0 ? std::pow(s, r) : -std::pow(-s, r);
}

// Solve (1 + c theta2) v + c theta1 v^r = z for v in [0, z/(1+c theta2)], z >= 0.
// The left side is concave increasing, so Newton started at the right end of
// the bracket lands left of the root and then increases monotonically; the
// bracket guards against round-off.
inline double power_resolvent_positive(double theta1, double theta2, double r, double c, double z) {
  if (z <= 0.0) return 0.0;
  const double lin = 1.0 + c * theta2;
  const double pw = c * theta1;
  if (pw == 0.0) return z / lin;
  if (r == 0.5) {
    // quadratic in w = sqrt(v), written in the cancellation-free form
    const double w = 2.0 * z / (pw + std::sqrt(pw * pw + 4.0 * lin * z));
    return w * w;
  }
  double lo = 0.0;
  double hi = z / lin;
  // the power term alone gives a tighter upper end when it dominates
  hi = std::min(hi, std::pow(z / pw, 1.0 / r));
  double v = hi;
  for (int it = 0; it < 200; ++it) {
    const double vr = std::pow(v, r);
    const double f = lin * v + pw * vr - z;
    if (f > 0.0) hi = v; else lo = v;
    if (f == 0.0) return v;
    const double df = lin + pw * r * vr / v;
    double next = v - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - v) <= 1e-16 * v || hi - lo <= 1e-16 * hi) return next;
    v = next;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// The set Psi(s).
inline Interval psi_values(const PsiGraph& g, double s) {
  switch (g.kind) {
    case PsiKind::soc:
      if (s > 0.0) {
        const double y = g.theta1 + g.theta2 * s;
        return {y, y};
      }
      if (s == 0.0) return {g.odd_extend ? -g.theta1 : 0.0, g.theta1};
      if (g.odd_extend) {
        const double y = -g.theta1 + g.theta2 * s;
        return {y, y};
      }
      return {0.0, 0.0};
    case PsiKind::fast_diffusion: {
      const double y = detail::signed_power(s, g.r);
      return {y, y};
    }
    case PsiKind::power_plus_linear: {
      const double y = g.theta1 * detail::signed_power(s, g.r) + g.theta2 * s;
      return {y, y};
    }
    case PsiKind::linear: return {g.theta2 * s, g.theta2 * s};
  }
  return {0.0, 0.0};
}

/// Element of Psi(s) of minimal absolute value.
inline double psi_minimal_section(const PsiGraph& g, double s) {
  const Interval y = psi_values(g, s);
  if (y.lo <= 0.0 && y.hi >= 0.0) return 0.0;
  return std::abs(y.lo) < std::abs(y.hi) ? y.lo : y.hi;
}

/// Unique v with z - v in c Psi(v).
inline double resolvent(const PsiGraph& g, double c, double z) {
  if (!(c > 0.0)) throw DomainError("resolvent: c must be positive");
  switch (g.kind) {
    case PsiKind::soc: {
      const double jump = c * g.theta1;
      const double lin = 1.0 + c * g.theta2;
      if (z > jump) return (z - jump) / lin;
      if (z >= 0.0) return 0.0;
      if (!g.odd_extend) return z;
      if (z >= -jump) return 0.0;
      return (z + jump) / lin;
    }
    case PsiKind::linear: return z / (1.0 + c * g.theta2);
    case PsiKind::fast_diffusion:
    case PsiKind::power_plus_linear: {
      const double v = detail::power_resolvent_positive(g.theta1, g.theta2, g.r, c, std::abs(z));
      return z >= 0.0 ? v : -v;
    }
  }
  return 0.0;
}

/// Derivative of z -> resolvent(g, c, z) (a generalized derivative at kinks), in [0, 1].
inline double resolvent_derivative(const PsiGraph& g, double c, double z) {
  switch (g.kind) {
    case PsiKind::soc: {
      const double jump = c * g.theta1;
      const double slope = 1.0 / (1.0 + c * g.theta2);
      if (z > jump) return slope;
      if (z >= 0.0) return 0.0;
      if (!g.odd_extend) return 1.0;
      return z >= -jump ? 0.0 : slope;
    }
    case PsiKind::linear: return 1.0 / (1.0 + c * g.theta2);
    case PsiKind::fast_diffusion:
    case PsiKind::power_plus_linear: {
      const double v = std::abs(resolvent(g, c, z));
      if (v == 0.0) return 0.0;
      return 1.0 / (1.0 + c * (g.theta1 * g.r * std::pow(v, g.r - 1.0) + g.theta2));
    }
  }
  return 1.0;
}

/// Yosida approximation Psi_delta(s) = (s - J_delta(s)) / delta.
inline double yosida(const PsiGraph& g, double delta, double s) {
  if (!(delta > 0.0)) throw DomainError("yosida: delta must be positive");
  return (s - resolvent(g, delta, s)) / delta;
}

struct ConditionCheck {
  bool pass = true;
  double worst_slack = std::numeric_limits<double>::infinity();
  double worst_at = 0.0;
  std::vector<double> violations;  // sample points where an inequality fails
  bool odd_extended_for_check = false;
  std::string note;
};

/// Samples on both sides of zero, log-spaced from 1e-6 to 1e6 plus zero.
inline std::vector<double> default_sample_grid(int per_decade = 8) {
  std::vector<double> s{0.0};
  for (int e = -6 * per_decade; e <= 6 * per_decade; ++e) {
    const double v = std::pow(10.0, static_cast<double>(e) / per_decade);
    s.push_back(v);
    s.push_back(-v);
  }
  std::sort(s.begin(), s.end());
  return s;
}

/// Checks C(|s|^q + |s|) >= s y >= theta1 |s|^{1+r} + theta2 s^2 for every
/// y in Psi(s) (both ends of the interval at multivalued points). For the
/// literal SOC graph, whose negative branch vanishes, negative samples are
/// evaluated on the odd extension: nonnegative data stay nonnegative, so the
/// two graphs generate the same solutions.
inline ConditionCheck check_condition_P(const PsiGraph& graph, double C, double q, double theta1, double theta2,
                                        double r, std::span<const double> samples) {
  PsiGraph g = graph;
  ConditionCheck out;
  if (g.kind == PsiKind::soc && !g.odd_extend) {
    g.odd_extend = true;
    out.odd_extended_for_check = true;
    out.note = "negative samples evaluated on the odd extension";
  }
  for (double s : samples) {
    const Interval y = psi_values(g, s);
    const double as = std::abs(s);
    const double upper = C * (std::pow(as, q) + as);
    const double lower = theta1 * std::pow(as, 1.0 + r) + theta2 * s * s;
    const double tol = 1e-12 * std::max({1.0, upper, lower});
    bool violated = false;
    for (double yy : {y.lo, y.hi}) {
      const double sy = s * yy;
      const double slack = std::min(upper - sy, sy - lower);
      const double scaled = slack / std::max(1.0, std::max(upper, lower));
      if (scaled < out.worst_slack) {
        out.worst_slack = scaled;
        out.worst_at = s;
      }
      if (slack < -tol) violated = true;
    }
    if (violated) {
      out.pass = false;
      out.violations.push_back(s);
    }
  }
  return out;
}

struct MonotoneCheck {
  bool pass = true;
  double worst_ratio = std::numeric_limits<double>::infinity();
  std::pair<double, double> worst_pair{0.0, 0.0};
};

/// Checks (s-t)(Psi(s)-Psi(t)) >= kappa |s-t|^2 on the given pairs.
inline MonotoneCheck check_strong_monotone(const PsiGraph& g, double kappa,
                                           std::span<const std::pair<double, double>> pairs) {
  if (g.multivalued())
    throw UnsupportedError("strong monotonicity requires a continuous single-valued graph");
  MonotoneCheck out;
  for (const auto& [s, t] : pairs) {
    if (s == t) continue;
    const double ratio = (psi_values(g, s).lo - psi_values(g, t).lo) / (s - t);
    if (ratio < out.worst_ratio) {
      out.worst_ratio = ratio;
      out.worst_pair = {s, t};
    }
  }
  out.pass = out.worst_ratio >= kappa * (1.0 - 1e-12);
  return out;
}

/// Pairs (s, s + ds) over log-spaced s and ds, both signs, reaching 1e6.
inline std::vector<std::pair<double, double>> default_sample_pairs() {
  std::vector<std::pair<double, double>> pairs;
  const auto grid = default_sample_grid(4);
  for (double s : grid)
    for (double ds : {1e-3, 1e-1, 1.0, 10.0, 1e3})
      pairs.emplace_back(s, s + ds);
  return pairs;
}

}  // namespace extinction
