#pragma once

// Noise operators B(x) and their derived constants: the drift-compensation
// rate rho3, the uncoloured dissipativity margin rho0, summability of the
// diagonal coefficients, and quadratic-variation envelopes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extinction/errors.hpp"
#include "extinction/spectral.hpp"

namespace extinction {

enum class NoiseKind { none, diagonal, uncoloured, rank_one, finite_mode, mixed };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::diagonal: return "diagonal";
    case NoiseKind::uncoloured: return "uncoloured";
    case NoiseKind::rank_one: return "rank_one";
    case NoiseKind::finite_mode: return "finite_mode";
    case NoiseKind::mixed: return "mixed";
  }
  return "unknown";
}

/// Coefficient sequence mu_k (k = 1, 2, ...): an explicit list or a power law a k^{-p}.
/// An explicit list whose tail is `open` only specifies its leading terms.
struct MuRule {
  enum class Kind { list, powerlaw };
  Kind kind = Kind::list;
  std::vector<double> values;
  bool open_tail = false;
  double a = 0.0;
  double p = 0.0;

  static MuRule list(std::vector<double> v, bool open_tail = false) {
    MuRule m;
    m.kind = Kind::list;
    m.values = std::move(v);
    m.open_tail = open_tail;
    return m;
  }
  static MuRule powerlaw(double a, double p) {
    MuRule m;
    m.kind = Kind::powerlaw;
    m.a = a;
    m.p = p;
    return m;
  }

  /// mu_k for 1-based k; list entries past the end are zero.
  double operator()(std::size_t k) const {
    if (kind == Kind::powerlaw) return a * std::pow(static_cast<double>(k), -p);
    return k <= values.size() ? values[k - 1] : 0.0;
  }
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  MuRule mu;                      // diagonal (per flattened mode) and finite_mode (mu_1..mu_{N+1})
  double sigma = 0.0;             // uncoloured: B0 = sigma * identity, so ||B0||_{2->2} = |sigma|
  double c = 0.0;                 // rank_one, mixed
  std::vector<double> direction;  // rank_one: coefficients of the unit vector e (recorded only)
  double c_tilde = 0.0;           // mixed: ||B~(x)||_HS^2 <= c_tilde^2 ||x||_H^2

  static NoiseSpec none() { return {}; }
  static NoiseSpec diagonal(MuRule mu) {
    NoiseSpec s;
    s.kind = NoiseKind::diagonal;
    s.mu = std::move(mu);
    return s;
  }
  static NoiseSpec uncoloured(double sigma) {
    NoiseSpec s;
    s.kind = NoiseKind::uncoloured;
    s.sigma = sigma;
    return s;
  }
  static NoiseSpec rank_one(double c, std::vector<double> direction = {1.0}) {
    NoiseSpec s;
    s.kind = NoiseKind::rank_one;
    s.c = c;
    s.direction = std::move(direction);
    return s;
  }
  static NoiseSpec finite_mode(std::vector<double> mu) {
    if (mu.empty()) throw ParameterError("finite_mode noise: need at least one coefficient");
    NoiseSpec s;
    s.kind = NoiseKind::finite_mode;
    s.mu = MuRule::list(std::move(mu));
    return s;
  }
  static NoiseSpec mixed(double c, double c_tilde) {
    NoiseSpec s;
    s.kind = NoiseKind::mixed;
    s.c = c;
    s.c_tilde = c_tilde;
    return s;
  }

  /// Coefficient of mode k (1-based) for the diagonal-type variants.
  double diagonal_coefficient(std::size_t k) const {
    if (kind == NoiseKind::uncoloured) return sigma;
    return mu(k);
  }
  bool is_zero() const {
    switch (kind) {
      case NoiseKind::none: return true;
      case NoiseKind::uncoloured: return sigma == 0.0;
      case NoiseKind::rank_one: return c == 0.0;
      case NoiseKind::mixed: return c == 0.0 && c_tilde == 0.0;
      case NoiseKind::diagonal:
        if (mu.kind == MuRule::Kind::powerlaw) return mu.a == 0.0;
        [[fallthrough]];
      case NoiseKind::finite_mode:
        return std::all_of(mu.values.begin(), mu.values.end(), [](double v) { return v == 0.0; });
    }
    return true;
  }
};

/// Triple products T[j][k][m] = <e_m e_j, e_k>_2 evaluated by grid quadrature,
/// i.e. exactly the matrices of the pseudo-spectral product used by the
/// simulator. Symmetric in (j, k, m).
class TripleProducts {
public:
  TripleProducts(const SineTransform& transform) : N_(transform.modes()) {
    const std::size_t G = transform.grid_points();
    std::vector<double> basis(G * N_);
    std::vector<double> unit(N_, 0.0), col(G);
    for (std::size_t k = 0; k < N_; ++k) {
      unit.assign(N_, 0.0);
      unit[k] = 1.0;
      transform.to_physical(unit, col);
      for (std::size_t g = 0; g < G; ++g) basis[g * N_ + k] = col[g];
    }
    data_.assign(N_ * N_ * N_, 0.0);
    const double w = transform.weight();
    for (std::size_t j = 0; j < N_; ++j)
      for (std::size_t k = j; k < N_; ++k)
        for (std::size_t m = k; m < N_; ++m) {
          double s = 0.0;
          for (std::size_t g = 0; g < G; ++g) {
            const double* row = basis.data() + g * N_;
            s += row[j] * row[k] * row[m];
          }
          s *= w;
          for (auto [a, b, c] : {std::array{j, k, m}, std::array{j, m, k}, std::array{k, j, m},
                                 std::array{k, m, j}, std::array{m, j, k}, std::array{m, k, j}})
            data_[(a * N_ + b) * N_ + c] = s;
        }
  }

  std::size_t modes() const noexcept { return N_; }
  double operator()(std::size_t j, std::size_t k, std::size_t m) const { return data_[(j * N_ + k) * N_ + m]; }
  const double* slice(std::size_t j) const { return data_.data() + j * N_ * N_; }

private:
  std::size_t N_;
  std::vector<double> data_;
};

/// Scratch buffers for one trajectory.
struct NoiseWorkspace {
  std::vector<double> grid_x;
  std::vector<double> grid_g;
  std::vector<double> spectral;
};

/// A noise operator bound to a truncated operator and its transform.
/// Immutable after construction; each trajectory supplies its own workspace.
class NoiseModel {
public:
  NoiseModel(NoiseSpec spec, std::shared_ptr<const OperatorSpec> op, std::shared_ptr<const SineTransform> transform,
             bool quadratic_forms = false)
      : spec_(std::move(spec)), op_(std::move(op)), transform_(std::move(transform)) {
    const std::size_t N = op_->size();
    if (spec_.kind == NoiseKind::finite_mode && spec_.mu.values.size() > N)
      throw ParameterError("finite_mode noise: needs at most as many coefficients as modes");
    if (spec_.kind == NoiseKind::diagonal || spec_.kind == NoiseKind::uncoloured) {
      if (!transform_) throw ParameterError("diagonal noise needs a physical grid");
      coeff_.resize(N);
      for (std::size_t k = 0; k < N; ++k) coeff_[k] = spec_.diagonal_coefficient(k + 1);
      if (quadratic_forms) build_quadratic_forms();
    }
  }

  const NoiseSpec& spec() const noexcept { return spec_; }

  /// Number of scalar Brownian increments consumed per step.
  std::size_t increments() const {
    switch (spec_.kind) {
      case NoiseKind::none: return 0;
      case NoiseKind::diagonal:
      case NoiseKind::uncoloured: return op_->size();
      case NoiseKind::rank_one: return 1;
      case NoiseKind::finite_mode: return spec_.mu.values.size();
      case NoiseKind::mixed: throw UnsupportedError("mixed noise is supported for bounds only, not simulation");
    }
    return 0;
  }

  NoiseWorkspace make_workspace() const {
    NoiseWorkspace ws;
    if (transform_) {
      ws.grid_x.resize(transform_->grid_points());
      ws.grid_g.resize(transform_->grid_points());
    }
    ws.spectral.resize(op_->size());
    return ws;
  }

  /// B(x) dW in spectral coordinates.
  void increment(std::span<const double> x, std::span<const double> dW, std::span<double> out,
                 NoiseWorkspace& ws) const {
    const std::size_t N = op_->size();
    if (x.size() != N || out.size() != N) throw ParameterError("noise: field has wrong length");
    if (dW.size() != increments()) throw ParameterError("noise: increment vector has wrong length");
    switch (spec_.kind) {
      case NoiseKind::none:
        std::fill(out.begin(), out.end(), 0.0);
        return;
      case NoiseKind::rank_one: {
        const double f = spec_.c * dW[0];
        for (std::size_t k = 0; k < N; ++k) out[k] = f * x[k];
        return;
      }
      case NoiseKind::finite_mode: {
        const std::size_t n_dir = spec_.mu.values.size() - 1;
        for (std::size_t k = 0; k < n_dir; ++k) out[k] = spec_.mu.values[k] * x[k] * dW[k];
        const double tail = spec_.mu.values[n_dir] * dW[n_dir];
        for (std::size_t k = n_dir; k < N; ++k) out[k] = tail * x[k];
        return;
      }
      case NoiseKind::diagonal:
      case NoiseKind::uncoloured: {
        for (std::size_t k = 0; k < N; ++k) ws.spectral[k] = coeff_[k] * dW[k];
        transform_->to_physical(ws.spectral, ws.grid_g);
        transform_->to_physical(x, ws.grid_x);
        for (std::size_t g = 0; g < ws.grid_x.size(); ++g) ws.grid_x[g] *= ws.grid_g[g];
        transform_->to_spectral(ws.grid_x, out);
        return;
      }
      case NoiseKind::mixed: throw UnsupportedError("mixed noise is supported for bounds only, not simulation");
    }
  }

  /// ||B(x)||^2 in L_2(L^2; H) summed over the truncated directions.
  double hs_norm_sq(std::span<const double> x) const {
    const auto& lam = op_->lambda;
    const std::size_t N = op_->size();
    switch (spec_.kind) {
      case NoiseKind::none: return 0.0;
      case NoiseKind::rank_one: return spec_.c * spec_.c * h_norm_sq(x, lam);
      case NoiseKind::finite_mode: {
        const std::size_t n_dir = spec_.mu.values.size() - 1;
        double s = 0.0;
        for (std::size_t k = 0; k < n_dir; ++k) s += spec_.mu.values[k] * spec_.mu.values[k] * x[k] * x[k] / lam[k];
        double tail = 0.0;
        for (std::size_t k = n_dir; k < N; ++k) tail += x[k] * x[k] / lam[k];
        return s + spec_.mu.values[n_dir] * spec_.mu.values[n_dir] * tail;
      }
      case NoiseKind::diagonal:
      case NoiseKind::uncoloured: {
        require_forms();
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          double row = 0.0;
          for (std::size_t j = 0; j < N; ++j) row += form_[i * N + j] * x[j];
          s += x[i] * row;
        }
        return s;
      }
      case NoiseKind::mixed: throw UnsupportedError("mixed noise: no explicit operator");
    }
    return 0.0;
  }

  /// Coefficients m_j with dM = 2 <B(x) dW, x>_H = sum_j m_j dW_j; the
  /// instantaneous quadratic-variation rate is sum_j m_j^2.
  std::vector<double> martingale_coefficients(std::span<const double> x) const {
    const auto& lam = op_->lambda;
    const std::size_t N = op_->size();
    std::vector<double> m(increments(), 0.0);
    switch (spec_.kind) {
      case NoiseKind::none: break;
      case NoiseKind::rank_one: m[0] = 2.0 * spec_.c * h_norm_sq(x, lam); break;
      case NoiseKind::finite_mode: {
        const std::size_t n_dir = spec_.mu.values.size() - 1;
        for (std::size_t k = 0; k < n_dir; ++k) m[k] = 2.0 * spec_.mu.values[k] * x[k] * x[k] / lam[k];
        double tail = 0.0;
        for (std::size_t k = n_dir; k < N; ++k) tail += x[k] * x[k] / lam[k];
        m[n_dir] = 2.0 * spec_.mu.values[n_dir] * tail;
        break;
      }
      case NoiseKind::diagonal:
      case NoiseKind::uncoloured: {
        require_forms();
        for (std::size_t j = 0; j < N; ++j) {
          const double* T = triples_->slice(j);
          double s = 0.0;
          for (std::size_t k = 0; k < N; ++k) {
            double tk = 0.0;
            for (std::size_t i = 0; i < N; ++i) tk += T[k * N + i] * x[i];
            s += tk * x[k] / lam[k];
          }
          m[j] = 2.0 * coeff_[j] * s;
        }
        break;
      }
      case NoiseKind::mixed: throw UnsupportedError("mixed noise: no explicit operator");
    }
    return m;
  }

  bool has_quadratic_forms() const noexcept { return triples_ != nullptr; }
  const std::vector<double>& quadratic_form() const {
    require_forms();
    return form_;
  }

private:
  void require_forms() const {
    if (!triples_) throw UnsupportedError("noise model was built without quadratic forms");
  }

  // A = sum_j mu_j^2 T_j^T Lambda^{-1} T_j, so that ||B(x)||_HS^2 = a^T A a.
  void build_quadratic_forms() {
    triples_ = std::make_shared<TripleProducts>(*transform_);
    const std::size_t N = op_->size();
    const auto& lam = op_->lambda;
    form_.assign(N * N, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      const double w = coeff_[j] * coeff_[j];
      if (w == 0.0) continue;
      const double* T = triples_->slice(j);
      for (std::size_t k = 0; k < N; ++k) {
        const double* row = T + k * N;
        const double scale = w / lam[k];
        for (std::size_t m = 0; m < N; ++m) {
          const double rm = scale * row[m];
          if (rm == 0.0) continue;
          for (std::size_t mm = 0; mm < N; ++mm) form_[m * N + mm] += rm * row[mm];
        }
      }
    }
  }

  NoiseSpec spec_;
  std::shared_ptr<const OperatorSpec> op_;
  std::shared_ptr<const SineTransform> transform_;
  std::vector<double> coeff_;
  std::shared_ptr<const TripleProducts> triples_;
  std::vector<double> form_;
};

/// Grid size used when a caller does not specify one: the collocation grid
/// with one node per mode and axis.
inline int default_grid_size(const OperatorSpec& op) { return op.modes_per_axis; }

inline SpectralField apply_noise(const NoiseSpec& spec, const SpectralField& x, std::span<const double> dW,
                                 int grid_size = 0) {
  std::shared_ptr<const SineTransform> tr;
  if (x.op->has_box()) tr = std::make_shared<SineTransform>(*x.op, grid_size > 0 ? grid_size : default_grid_size(*x.op));
  NoiseModel model(spec, x.op, tr);
  auto ws = model.make_workspace();
  SpectralField out{std::vector<double>(x.coeffs.size()), x.op};
  model.increment(x.coeffs, dW, out.coeffs, ws);
  return out;
}

// ---------------------------------------------------------------------------
// summability of mu_k^2 lambda_k^{d/2 v (1+eps)}

struct ConditionTResult {
  bool pass = false;
  double exponent = 0.0;       // lambda exponent max(d/2, 1+eps)
  double partial_sum = 0.0;    // over the truncated eigenvalue table
  std::optional<double> supremal_epsilon;  // power laws: sup of admissible eps (none if no eps > 0 works)
  std::string note;
};

/// Power-law rules are decided from the Weyl growth lambda_k ~ k^{2/d}
/// (d = n/alpha); finite lists always pass.
inline ConditionTResult check_condition_T(const MuRule& mu, const OperatorSpec& op, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("condition T: epsilon must be positive");
  ConditionTResult out;
  const double d = op.d_eff;
  out.exponent = std::max(d / 2.0, 1.0 + epsilon);
  for (std::size_t k = 0; k < op.size(); ++k) {
    const double m = mu(k + 1);
    out.partial_sum += m * m * std::pow(op.lambda[k], out.exponent);
  }
  if (mu.kind == MuRule::Kind::list) {
    if (mu.open_tail) throw UndecidableError("condition T: explicit list with unspecified tail");
    out.pass = true;
    out.note = "finite list";
    return out;
  }
  if (mu.a == 0.0) {
    out.pass = true;
    out.note = "all coefficients zero";
    out.supremal_epsilon = std::numeric_limits<double>::infinity();
    return out;
  }
  // terms ~ k^{-2p + (2/d) e}; summable iff 2p - (2/d) e > 1
  out.pass = 2.0 * mu.p - (2.0 / d) * out.exponent > 1.0;
  if (mu.p > 1.0) {
    const double sup_eps = d * (2.0 * mu.p - 1.0) / 2.0 - 1.0;
    if (sup_eps > 0.0) out.supremal_epsilon = sup_eps;
  }
  out.note = out.pass ? "power law: convergent" : "power law: divergent";
  return out;
}

// ---------------------------------------------------------------------------
// rho3

struct Rho3Result {
  double value = 0.0;
  bool applicable = true;
  bool converged = true;
  std::optional<double> half_truncation_value;
  std::vector<double> witness;  // maximizer with ||x||_H = 1 (diagonal variants)
  int iterations = 0;
  std::vector<std::string> warnings;
};

namespace detail {

// Largest eigenpair of a symmetric PSD matrix by power iteration.
inline std::pair<double, std::vector<double>> power_iteration(const std::vector<double>& B, std::size_t N,
                                                              int max_iter, double tol, int& iterations) {
  std::vector<double> b(N), next(N);
  for (std::size_t k = 0; k < N; ++k) b[k] = 1.0 / std::sqrt(static_cast<double>(k + 1));
  double nb = std::sqrt(l2_norm_sq(b));
  for (auto& v : b) v /= nb;
  double value = 0.0;
  iterations = 0;
  for (int it = 0; it < max_iter; ++it) {
    ++iterations;
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j) s += B[i * N + j] * b[j];
      next[i] = s;
    }
    double rq = 0.0;
    for (std::size_t i = 0; i < N; ++i) rq += b[i] * next[i];
    const double nn = std::sqrt(l2_norm_sq(next));
    if (nn == 0.0) return {0.0, b};
    for (std::size_t i = 0; i < N; ++i) next[i] /= nn;
    std::swap(b, next);
    if (it > 0 && std::abs(rq - value) <= tol * std::abs(rq)) {
      value = rq;
      break;
    }
    value = rq;
  }
  return {value, b};
}

inline Rho3Result rho3_diagonal(const NoiseSpec& spec, std::shared_ptr<const OperatorSpec> op, int grid_size) {
  Rho3Result out;
  auto tr = std::make_shared<SineTransform>(*op, grid_size);
  NoiseModel model(spec, op, tr, true);
  const std::size_t N = op->size();
  const auto& A = model.quadratic_form();
  std::vector<double> B(N * N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) B[i * N + j] = std::sqrt(op->lambda[i]) * A[i * N + j] * std::sqrt(op->lambda[j]);
  constexpr int kMaxIter = 200000;
  auto [top, vec] = power_iteration(B, N, kMaxIter, 1e-14, out.iterations);
  if (out.iterations >= kMaxIter) {
    out.converged = false;
    out.warnings.push_back("power iteration hit the iteration cap");
  }
  out.witness.resize(N);
  for (std::size_t k = 0; k < N; ++k) out.witness[k] = std::sqrt(op->lambda[k]) * vec[k];
  out.value = 0.5 * top;
  return out;
}

}  // namespace detail

/// rho3 = 1/2 sup_{||x||_H = 1} ||B(x)||_HS^2 on the truncation.
inline Rho3Result rho3(const NoiseSpec& spec, std::shared_ptr<const OperatorSpec> op, int grid_size = 0,
                       std::optional<double> epsilon = std::nullopt) {
  Rho3Result out;
  switch (spec.kind) {
    case NoiseKind::none: out.value = 0.0; return out;
    case NoiseKind::rank_one: out.value = 0.5 * spec.c * spec.c; return out;
    case NoiseKind::mixed: out.value = 0.5 * (spec.c * spec.c + spec.c_tilde * spec.c_tilde); return out;
    case NoiseKind::finite_mode: {
      double m = 0.0;
      for (double v : spec.mu.values) m = std::max(m, v * v);
      out.value = 0.5 * m;
      return out;
    }
    case NoiseKind::uncoloured:
      out.applicable = false;
      out.warnings.push_back("uncoloured noise: use rho0 (dissipativity margin) instead of rho3");
      return out;
    case NoiseKind::diagonal: break;
  }
  if (spec.is_zero()) return out;
  const int g = grid_size > 0 ? grid_size : default_grid_size(*op);
  out = detail::rho3_diagonal(spec, op, g);
  try {
    // the condition asks for some eps > 0; use the caller's eps or, for power
    // laws, half the supremal admissible one
    auto t = check_condition_T(spec.mu, *op, epsilon ? *epsilon : 0.5);
    if (!epsilon && t.supremal_epsilon) t = check_condition_T(spec.mu, *op, std::min(1.0, 0.5 * *t.supremal_epsilon));
    if (!t.pass) {
      out.converged = false;
      out.warnings.push_back("summability condition fails: value is a truncation artefact");
    }
  } catch (const UndecidableError&) {
    out.warnings.push_back("summability undecidable for an open list");
  }
  if (op->has_box() && op->modes_per_axis >= 2) {
    auto half = std::make_shared<OperatorSpec>(
        build_operator(op->n, op->alpha, op->side_lengths, op->modes_per_axis / 2, op->c_inf));
    const int hg = std::max(half->modes_per_axis, g * half->modes_per_axis / op->modes_per_axis);
    out.half_truncation_value = detail::rho3_diagonal(spec, half, hg).value;
    if (out.value > 0.0 && std::abs(out.value - *out.half_truncation_value) > 0.05 * out.value)
      out.warnings.push_back("rho3 drifts by more than 5% between N/2 and N modes");
  }
  return out;
}

// ---------------------------------------------------------------------------
// rho0 and quadratic-variation envelopes

struct Rho0Result {
  double value = 0.0;
  bool finite = true;
  bool tail_unknown = false;
  std::string note;
};

/// rho0 = 1/2 ||B0||^2 sum_k ||e_k||_inf^2 / lambda_k. On an interval the sum
/// is (2/L)(L/pi)^{2 alpha} zeta(2 alpha); boxes with n >= 2 diverge. A
/// user-supplied sup-norm table yields the partial sum over that table.
inline Rho0Result rho0_uncoloured(const OperatorSpec& op, double norm_B0,
                                  std::optional<std::vector<double>> sup_norm_sq = std::nullopt) {
  Rho0Result out;
  const double pre = 0.5 * norm_B0 * norm_B0;
  if (sup_norm_sq) {
    if (sup_norm_sq->size() > op.size()) throw ParameterError("rho0: sup-norm table longer than eigenvalue table");
    double s = 0.0;
    for (std::size_t k = 0; k < sup_norm_sq->size(); ++k) s += (*sup_norm_sq)[k] / op.lambda[k];
    out.value = pre * s;
    out.tail_unknown = true;
    out.note = "partial sum over the supplied table";
    return out;
  }
  if (norm_B0 == 0.0) return out;
  if (!op.has_box()) throw ParameterError("rho0: needs a box operator or a sup-norm table");
  if (op.n != 1 || 2.0 * op.alpha <= 1.0) {
    out.value = std::numeric_limits<double>::infinity();
    out.finite = false;
    out.note = "sum of ||e_k||_inf^2 / lambda_k diverges";
    return out;
  }
  const double len = op.side_lengths[0];
  const double s = (2.0 / len) * std::pow(len / kPi, 2.0 * op.alpha) * std::riemann_zeta(2.0 * op.alpha);
  out.value = pre * s;
  return out;
}

struct QvEnvelope {
  double c1 = 0.0;  // g1(s) = c1 s^2
  double c2 = 0.0;  // g2(s) = c2 s^2
  bool degenerate = false;
};

inline QvEnvelope qv_envelope(const NoiseSpec& spec) {
  QvEnvelope out;
  switch (spec.kind) {
    case NoiseKind::rank_one:
      out.c1 = out.c2 = 4.0 * spec.c * spec.c;
      out.degenerate = spec.c == 0.0;
      return out;
    case NoiseKind::mixed:
      out.c1 = 4.0 * spec.c * spec.c;
      out.c2 = 4.0 * (spec.c * spec.c + spec.c_tilde * spec.c_tilde);
      out.degenerate = spec.c == 0.0;
      return out;
    case NoiseKind::finite_mode: {
      double inv = 0.0, sq = 0.0;
      for (double m : spec.mu.values) {
        sq += m * m;
        if (m == 0.0) out.degenerate = true;
        else inv += 1.0 / (m * m);
      }
      out.c1 = out.degenerate ? 0.0 : 4.0 / inv;
      out.c2 = 4.0 * sq;
      return out;
    }
    default: throw UnsupportedError("quadratic-variation envelope is defined for rank_one, finite_mode and mixed noise");
  }
}

}  // namespace extinction
