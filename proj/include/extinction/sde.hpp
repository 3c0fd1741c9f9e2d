#pragma once

// Spectral Galerkin time stepping for dX + L Psi(X) dt = B(X) dW on a
// truncated sine basis, extinction-time measurement, Monte Carlo ensembles
// and the Ito-identity / supermartingale diagnostics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "extinction/errors.hpp"
#include "extinction/noise.hpp"
#include "extinction/nonlinearity.hpp"
#include "extinction/spectral.hpp"

namespace extinction {

enum class Scheme { semi_implicit_resolvent, explicit_yosida };

inline std::string to_string(Scheme s) {
  return s == Scheme::semi_implicit_resolvent ? "semi_implicit_resolvent" : "explicit_yosida";
}

struct SimConfig {
  std::shared_ptr<const OperatorSpec> op;
  int grid_size = 0;  // 0: collocation grid, one node per mode and axis
  PsiGraph graph;
  NoiseSpec noise;
  std::vector<double> x0;
  double h = 1e-4;
  double T_max = 1.0;
  double eps_ext = 0.0;  // 0: 1e-8 without noise, 1e-6 with noise
  double delta_yosida = 0.0;
  int M_traj = 1;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::semi_implicit_resolvent;
  double solver_tol = 1e-10;
  int solver_max_iter = 20000;
  int checkpoints = 256;
  bool record_steps = false;  // per-step Ito and martingale records
  std::vector<double> betas;  // exponents for E e^{beta (tau ^ T)}

  double effective_eps() const {
    if (eps_ext > 0.0) return eps_ext;
    return noise.is_zero() ? 1e-8 : 1e-6;
  }
  int effective_grid() const { return grid_size > 0 ? grid_size : default_grid_size(*op); }
};

/// Checks the invariants a run relies on.
inline void validate(const SimConfig& c) {
  if (!c.op) throw ParameterError("sim: missing operator");
  if (c.x0.size() != c.op->size()) throw ParameterError("sim: x0 has the wrong number of coefficients");
  for (double v : c.x0)
    if (!std::isfinite(v)) throw ParameterError("sim: x0 must be finite");
  if (!(c.h > 0.0)) throw ParameterError("sim: h must be positive");
  if (!(c.T_max > c.h)) throw ParameterError("sim: need h < T_max");
  if (!(c.effective_eps() < std::sqrt(h_norm_sq(c.x0, c.op->lambda))))
    throw ParameterError("sim: eps_ext must be below ||x0||_H");
  if (c.M_traj < 1) throw ParameterError("sim: M_traj must be >= 1");
  if (c.scheme == Scheme::explicit_yosida && !(c.delta_yosida > 0.0))
    throw ParameterError("sim: explicit_yosida needs delta_yosida > 0");
  if (!(c.solver_tol > 0.0) || c.solver_max_iter < 1) throw ParameterError("sim: invalid solver settings");
  if (c.checkpoints < 1) throw ParameterError("sim: checkpoints must be >= 1");
  if (c.effective_grid() < c.op->modes_per_axis) throw ParameterError("sim: grid smaller than the mode count");
}

/// Preset initial data: s * e_1, or the coefficients of s * (bump) with the
/// positive bump prod_i sin(pi x_i / L_i)^2 projected onto the truncation.
inline std::vector<double> preset_scaled_e1(const OperatorSpec& op, double s) {
  std::vector<double> a(op.size(), 0.0);
  a[0] = s;
  return a;
}

inline std::vector<double> preset_bump(const OperatorSpec& op, double s, int grid_size) {
  SineTransform tr(op, grid_size);
  std::vector<double> vals(tr.grid_points(), 1.0);
  for (int axis = 0; axis < op.n; ++axis) {
    const auto nodes = tr.nodes(op, axis);
    const std::size_t stride = [&] {
      std::size_t st = 1;
      for (int j = axis + 1; j < op.n; ++j) st *= static_cast<std::size_t>(grid_size);
      return st;
    }();
    for (std::size_t g = 0; g < vals.size(); ++g) {
      const std::size_t j = (g / stride) % static_cast<std::size_t>(grid_size);
      const double sn = std::sin(kPi * nodes[j] / op.side_lengths[static_cast<std::size_t>(axis)]);
      vals[g] *= s * sn * sn;
    }
  }
  return tr.to_spectral(vals);
}

// ---------------------------------------------------------------------------
// RNG streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for trajectory `index` under `master`.
inline std::uint64_t trajectory_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// ---------------------------------------------------------------------------
// Drift substep: v + h L Psi(v) containing X.
//
// Douglas-Rachford / ADMM splitting between the spectral quadratic part and
// the pointwise graph on the grid, with z = S a enforced by the scaled dual u:
//   a = (X + rho h Lambda P(z - u)) / (1 + rho h Lambda)
//   z = (I + Psi/rho)^{-1}(S a + u)
//   u = u + S a - z,   eta_grid = rho u in Psi(z).

struct DriftResult {
  int iterations = 0;
  double residual = 0.0;  // ||v + h L P eta_grid - X||_H / ||X||_H
  double primal = 0.0;    // ||S v - z|| / ||X||_2
};

class AdmmDriftSolver {
public:
  AdmmDriftSolver(const OperatorSpec& op, const SineTransform& tr, const PsiGraph& g)
      : op_(op), tr_(tr), g_(g) {
    const std::size_t G = tr.grid_points();
    const std::size_t N = op.size();
    z_.assign(G, 0.0);
    u_.assign(G, 0.0);
    sa_.assign(G, 0.0);
    zold_.assign(G, 0.0);
    grid_tmp_.assign(G, 0.0);
    spec_tmp_.assign(N, 0.0);
  }

  void reset() { warm_ = false; }

  DriftResult solve(std::span<const double> X, double h, std::span<double> v, double tol, int max_iter) {
    const auto& lam = op_.lambda;
    const std::size_t N = op_.size();
    const std::size_t G = tr_.grid_points();
    const double w = tr_.weight();
    DriftResult res;
    const double xh = std::sqrt(h_norm_sq(X, lam));
    if (xh == 0.0) {
      std::fill(v.begin(), v.end(), 0.0);
      std::fill(z_.begin(), z_.end(), 0.0);
      std::fill(u_.begin(), u_.end(), 0.0);
      return res;
    }
    if (g_.kind == PsiKind::linear) {
      for (std::size_t k = 0; k < N; ++k) v[k] = X[k] / (1.0 + h * g_.theta2 * lam[k]);
      return res;
    }
    if (!warm_) {
      tr_.to_physical(X, z_);
      std::fill(u_.begin(), u_.end(), 0.0);
      rho_ = initial_penalty();
      warm_ = true;
    }
    const double x2 = std::sqrt(l2_norm_sq(X));
    for (int it = 1; it <= max_iter; ++it) {
      res.iterations = it;
      for (std::size_t g = 0; g < G; ++g) grid_tmp_[g] = z_[g] - u_[g];
      tr_.to_spectral(grid_tmp_, spec_tmp_);
      for (std::size_t k = 0; k < N; ++k) {
        const double q = rho_ * h * lam[k];
        v[k] = (X[k] + q * spec_tmp_[k]) / (1.0 + q);
      }
      tr_.to_physical(v, sa_);
      std::swap(z_, zold_);
      const double c = 1.0 / rho_;
      double primal = 0.0, dual = 0.0;
      for (std::size_t g = 0; g < G; ++g) {
        z_[g] = resolvent(g_, c, sa_[g] + u_[g]);
        const double r = sa_[g] - z_[g];
        u_[g] += r;
        primal += r * r;
        const double dz = z_[g] - zold_[g];
        dual += dz * dz;
        grid_tmp_[g] = dz;
      }
      primal = std::sqrt(primal * w);
      dual = rho_ * std::sqrt(dual * w);
      // stationarity defect of v: rho h Lambda P(z - z_old)
      tr_.to_spectral(grid_tmp_, spec_tmp_);
      double stat = 0.0;
      for (std::size_t k = 0; k < N; ++k) {
        const double d = rho_ * h * lam[k] * spec_tmp_[k];
        stat += d * d / lam[k];
      }
      res.residual = std::sqrt(stat) / xh;
      res.primal = primal / x2;
      if (res.residual <= tol && res.primal <= tol) return res;
      if (primal > 10.0 * dual) {
        rho_ *= 2.0;
        for (auto& x : u_) x *= 0.5;
      } else if (dual > 10.0 * primal) {
        rho_ *= 0.5;
        for (auto& x : u_) x *= 2.0;
      }
    }
    throw SolverError("drift solve did not converge", std::max(res.residual, res.primal));
  }

  const std::vector<double>& grid_state() const { return z_; }

private:
  // median secant slope of Psi over the current grid values
  double initial_penalty() {
    std::vector<double> slopes;
    for (double s : z_) {
      if (s == 0.0) continue;
      const double y = psi_values(g_, s).hi;
      if (y / s > 0.0) slopes.push_back(y / s);
    }
    if (slopes.empty()) return std::max(1.0, g_.theta2);
    std::nth_element(slopes.begin(), slopes.begin() + static_cast<std::ptrdiff_t>(slopes.size() / 2), slopes.end());
    return std::max(slopes[slopes.size() / 2], 1e-12);
  }

  const OperatorSpec& op_;
  const SineTransform& tr_;
  const PsiGraph& g_;
  std::vector<double> z_, u_, sa_, zold_, grid_tmp_, spec_tmp_;
  double rho_ = 1.0;
  bool warm_ = false;
};

namespace detail {

// In-place LU with partial pivoting; solves A x = b, overwriting b. False if singular.
inline bool lu_solve(std::vector<double>& A, std::vector<double>& b, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(A[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(A[i * n + k]) > best) {
        best = std::abs(A[i * n + k]);
        piv = i;
      }
    if (!(best > 0.0) || !std::isfinite(best)) return false;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A[k * n + j], A[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    const double inv = 1.0 / A[k * n + k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = A[i * n + k] * inv;
      if (f == 0.0) continue;
      A[i * n + k] = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) A[i * n + j] -= f * A[k * n + j];
      b[i] -= f * b[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= A[k * n + j] * b[j];
    b[k] = s / A[k * n + k];
  }
  return true;
}

}  // namespace detail

// Semismooth Newton for collocation grids (as many grid points as modes).
// With b = S X and K = h S Lambda P the drift solve is z = b - K eta,
// eta in Psi(z); the inclusion is written as R(eta) = z - J_c(z + c eta) = 0
// and Newton runs on R with backtracking on ||R||.
class NewtonDriftSolver {
public:
  NewtonDriftSolver(const OperatorSpec& op, const SineTransform& tr, const PsiGraph& g)
      : op_(op), tr_(tr), g_(g), n_(tr.grid_points()) {
    if (n_ != op.size()) throw ParameterError("newton drift solver needs a collocation grid");
    const std::size_t N = op.size();
    std::vector<double> basis(n_ * N), unit(N), col(n_);
    for (std::size_t k = 0; k < N; ++k) {
      std::fill(unit.begin(), unit.end(), 0.0);
      unit[k] = 1.0;
      tr.to_physical(unit, col);
      for (std::size_t i = 0; i < n_; ++i) basis[i * N + k] = col[i];
    }
    k0_.assign(n_ * n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < N; ++k) s += basis[i * N + k] * op.lambda[k] * basis[j * N + k];
        k0_[i * n_ + j] = tr.weight() * s;
      }
    double tr_sum = 0.0;
    for (std::size_t i = 0; i < n_; ++i) tr_sum += k0_[i * n_ + i];
    k0_mean_diag_ = tr_sum / n_;
    eta_.assign(n_, 0.0);
    b_.assign(n_, 0.0);
    z_.assign(n_, 0.0);
    y_.assign(n_, 0.0);
    r_.assign(n_, 0.0);
    trial_.assign(n_, 0.0);
    rhs_.assign(n_, 0.0);
    m_.assign(n_ * n_, 0.0);
    spec_.assign(N, 0.0);
  }

  void reset() { warm_ = false; }

  // Returns false when Newton stalls; the caller then falls back to splitting.
  bool solve(std::span<const double> X, double h, std::span<double> v, double tol, int max_iter, DriftResult& res) {
    const auto& lam = op_.lambda;
    const std::size_t N = op_.size();
    const double w = tr_.weight();
    const double x2 = std::sqrt(l2_norm_sq(X));
    tr_.to_physical(X, b_);
    const double c = h * k0_mean_diag_;
    if (!warm_) {
      for (std::size_t i = 0; i < n_; ++i) eta_[i] = yosida(g_, c, b_[i]);
      warm_ = true;
    }
    double nr = residual(eta_, h, c, r_);
    const int cap = std::min(max_iter, 200);
    for (int it = 1; it <= cap; ++it) {
      res.iterations = it;
      res.residual = std::sqrt(nr * w) / x2;
      if (res.residual <= tol) break;
      // M = (I - D) h K0 + c D
      for (std::size_t i = 0; i < n_; ++i) {
        const double d = resolvent_derivative(g_, c, y_[i]);
        for (std::size_t j = 0; j < n_; ++j) m_[i * n_ + j] = (1.0 - d) * h * k0_[i * n_ + j];
        m_[i * n_ + i] += c * d;
        rhs_[i] = r_[i];
      }
      if (!detail::lu_solve(m_, rhs_, n_)) return false;
      double t = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        for (std::size_t i = 0; i < n_; ++i) trial_[i] = eta_[i] + t * rhs_[i];
        const double nt = residual(trial_, h, c, r_);
        if (nt <= (1.0 - 1e-4 * t) * nr || nt == 0.0) {
          std::swap(eta_, trial_);
          nr = nt;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        residual(eta_, h, c, r_);
        return false;
      }
      if (it == cap) {
        res.residual = std::sqrt(nr * w) / x2;
        if (res.residual > tol) return false;
      }
    }
    // v = X - h Lambda P eta
    tr_.to_spectral(eta_, spec_);
    for (std::size_t k = 0; k < N; ++k) v[k] = X[k] - h * lam[k] * spec_[k];
    res.primal = 0.0;
    return res.residual <= tol;
  }

  const std::vector<double>& selection() const { return eta_; }

private:
  // fills y_ = z + c eta and out = z - J_c(y); returns sum out^2
  double residual(const std::vector<double>& eta, double h, double c, std::vector<double>& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double ke = 0.0;
      const double* row = k0_.data() + i * n_;
      for (std::size_t j = 0; j < n_; ++j) ke += row[j] * eta[j];
      z_[i] = b_[i] - h * ke;
      y_[i] = z_[i] + c * eta[i];
      out[i] = z_[i] - resolvent(g_, c, y_[i]);
      s += out[i] * out[i];
    }
    return s;
  }

  const OperatorSpec& op_;
  const SineTransform& tr_;
  const PsiGraph& g_;
  std::size_t n_;
  std::vector<double> k0_;
  double k0_mean_diag_ = 1.0;
  std::vector<double> eta_, b_, z_, y_, r_, trial_, rhs_, m_, spec_;
  bool warm_ = false;
};

/// Drift substep solver: semismooth Newton on collocation grids, with the
/// splitting iteration as fallback and for oversampled grids.
class DriftSolver {
public:
  DriftSolver(const OperatorSpec& op, const SineTransform& tr, const PsiGraph& g) : admm_(op, tr, g) {
    if (tr.grid_points() == op.size() && g.kind != PsiKind::linear) newton_.emplace(op, tr, g);
  }

  void reset() {
    admm_.reset();
    if (newton_) newton_->reset();
  }

  DriftResult solve(std::span<const double> X, double h, std::span<double> v, double tol, int max_iter) {
    if (newton_ && l2_norm_sq(X) > 0.0) {
      DriftResult res;
      if (newton_->solve(X, h, v, tol, max_iter, res)) return res;
      newton_->reset();
      ++fallbacks_;
    }
    return admm_.solve(X, h, v, tol, max_iter);
  }

  long fallbacks() const { return fallbacks_; }

private:
  AdmmDriftSolver admm_;
  std::optional<NewtonDriftSolver> newton_;
  long fallbacks_ = 0;
};

// ---------------------------------------------------------------------------
// Trajectories

struct StepRecord {
  double t = 0.0;            // start of the step
  double h = 0.0;
  double x_H2 = 0.0;         // ||X_n||_H^2
  double next_H2 = 0.0;      // ||X_{n+1}||_H^2
  double drift = 0.0;        // 2 h <v, eta>_2
  double hs = 0.0;           // h ||B(v)||_HS^2
  double martingale = 0.0;   // 2 <B(v) dW, v>_H
  double qv_rate = 0.0;      // sum_j m_j(v)^2
  double v_H2 = 0.0;         // ||v||_H^2
};

struct Trajectory {
  std::size_t index = 0;
  bool extinct = false;
  bool failed = false;
  std::string failure;
  double hitting_time = 0.0;       // interpolated crossing of eps_ext, or T_max when censored
  std::optional<double> hitting_time_fine;  // crossing of eps_ext / 10
  double crossing_step = 0.0;      // length of the step containing the crossing
  std::vector<double> curve_t, curve_H2, curve_L2, curve_Lp;
  std::vector<StepRecord> steps;
  int retries = 0;
  long solver_iterations = 0;
  double max_solver_residual = 0.0;
  double max_dissipativity_excess = 0.0;  // max (||v||_H - ||X_n||_H)/||X_n||_H
  double min_positivity_ratio = 0.0;      // min grid value / max |grid value| (soft check)
  long positivity_violations = 0;
};

namespace detail {

struct TrajectoryWorkspace {
  explicit TrajectoryWorkspace(const SimConfig& c, std::shared_ptr<const SineTransform> tr, const NoiseModel& noise)
      : transform(std::move(tr)), solver(*c.op, *transform, c.graph), noise_ws(noise.make_workspace()) {
    const std::size_t N = c.op->size();
    v.assign(N, 0.0);
    dx.assign(N, 0.0);
    grid.assign(transform->grid_points(), 0.0);
    dW.assign(noise.increments(), 0.0);
  }
  std::shared_ptr<const SineTransform> transform;
  DriftSolver solver;
  NoiseWorkspace noise_ws;
  std::vector<double> v, dx, grid, dW;
};

inline void explicit_drift(const SimConfig& c, const SineTransform& tr, std::span<const double> X, double h,
                           std::span<double> v, std::vector<double>& grid) {
  tr.to_physical(X, grid);
  for (auto& s : grid) s = yosida(c.graph, c.delta_yosida, s);
  std::vector<double> eta = tr.to_spectral(grid);
  for (std::size_t k = 0; k < X.size(); ++k) v[k] = X[k] - h * c.op->lambda[k] * eta[k];
}

}  // namespace detail

/// One step X -> X_next over [t, t + h] with Brownian increment dW (already
/// scaled by sqrt(h)). Lie splitting: drift substep, then noise evaluated at v.
inline void step(const SimConfig& c, const NoiseModel& noise, detail::TrajectoryWorkspace& ws, std::span<const double> X,
                 double t, double h, std::span<const double> dW, std::span<double> X_next, Trajectory& traj) {
  const auto& lam = c.op->lambda;
  const std::size_t N = c.op->size();
  const double xh2 = h_norm_sq(X, lam);
  if (c.scheme == Scheme::semi_implicit_resolvent) {
    const auto r = ws.solver.solve(X, h, ws.v, c.solver_tol, c.solver_max_iter);
    traj.solver_iterations += r.iterations;
    traj.max_solver_residual = std::max(traj.max_solver_residual, std::max(r.residual, r.primal));
  } else {
    detail::explicit_drift(c, *ws.transform, X, h, ws.v, ws.grid);
  }
  const double vh2 = h_norm_sq(ws.v, lam);
  if (xh2 > 0.0) {
    const double excess = (std::sqrt(vh2) - std::sqrt(xh2)) / std::sqrt(xh2);
    traj.max_dissipativity_excess = std::max(traj.max_dissipativity_excess, excess);
    if (c.scheme == Scheme::semi_implicit_resolvent && excess > 100.0 * c.solver_tol + 1e-13)
      throw SolverError("drift substep increased the H-norm", excess);
  }
  ws.transform->to_physical(ws.v, ws.grid);
  if (c.graph.kind == PsiKind::soc || c.graph.kind == PsiKind::fast_diffusion) {
    double mx = 0.0, mn = 0.0;
    for (double s : ws.grid) {
      mx = std::max(mx, std::abs(s));
      mn = std::min(mn, s);
    }
    if (mx > 0.0) {
      traj.min_positivity_ratio = std::min(traj.min_positivity_ratio, mn / mx);
      if (mn < -1e-8 * mx) ++traj.positivity_violations;
    }
  }
  if (noise.increments() > 0) {
    noise.increment(ws.v, dW, ws.dx, ws.noise_ws);
    for (std::size_t k = 0; k < N; ++k) X_next[k] = ws.v[k] + ws.dx[k];
  } else {
    std::fill(ws.dx.begin(), ws.dx.end(), 0.0);
    std::copy(ws.v.begin(), ws.v.end(), X_next.begin());
  }
  if (c.record_steps) {
    StepRecord rec;
    rec.t = t;
    rec.h = h;
    rec.x_H2 = xh2;
    rec.v_H2 = vh2;
    rec.next_H2 = h_norm_sq(X_next, lam);
    // eta = (X - v)/(h lambda), so 2 h <v, eta>_2 = 2 sum v_k (X_k - v_k)/lambda_k
    double d = 0.0;
    for (std::size_t k = 0; k < N; ++k) d += ws.v[k] * (X[k] - ws.v[k]) / lam[k];
    rec.drift = 2.0 * d;
    if (noise.increments() > 0) {
      rec.hs = h * noise.hs_norm_sq(ws.v);
      rec.martingale = 2.0 * h_inner(ws.dx, ws.v, lam);
      const auto m = noise.martingale_coefficients(ws.v);
      for (double mj : m) rec.qv_rate += mj * mj;
    }
    traj.steps.push_back(rec);
  }
}

/// Integrates one trajectory to extinction (||X||_H <= eps_ext) or T_max.
/// After the crossing the state keeps evolving until eps_ext/10 for the
/// threshold-sensitivity report; recorded norms are zero from the crossing on.
inline Trajectory run_trajectory(const SimConfig& c, std::size_t index, const NoiseModel& noise,
                                 std::shared_ptr<const SineTransform> transform) {
  Trajectory traj;
  traj.index = index;
  const auto& lam = c.op->lambda;
  const std::size_t N = c.op->size();
  const double eps = c.effective_eps();
  const double eps_fine = eps / 10.0;
  detail::TrajectoryWorkspace ws(c, transform, noise);
  std::mt19937_64 rng(trajectory_seed(c.seed, index));
  std::normal_distribution<double> normal;

  std::vector<double> X(c.x0), Xn(N), Xmid(N), dW(noise.increments()), dW1(noise.increments());
  const double T = c.T_max;
  const long n_steps = static_cast<long>(std::ceil(T / c.h - 1e-9));
  const int K = c.checkpoints;
  traj.curve_t.resize(static_cast<std::size_t>(K) + 1);
  traj.curve_H2.assign(static_cast<std::size_t>(K) + 1, 0.0);
  traj.curve_L2.assign(static_cast<std::size_t>(K) + 1, 0.0);
  traj.curve_Lp.assign(static_cast<std::size_t>(K) + 1, 0.0);
  for (int i = 0; i <= K; ++i) traj.curve_t[static_cast<std::size_t>(i)] = T * i / K;
  const double p = 1.0 + c.graph.r;
  auto record = [&](std::size_t slot, std::span<const double> x) {
    traj.curve_H2[slot] = h_norm_sq(x, lam);
    traj.curve_L2[slot] = l2_norm_sq(x);
    transform->to_physical(x, ws.grid);
    traj.curve_Lp[slot] = std::pow(lp_norm_grid(ws.grid, p, transform->weight()), p);
  };
  record(0, X);
  std::size_t next_slot = 1;

  double t = 0.0;
  double norm = std::sqrt(h_norm_sq(X, lam));
  bool crossed = false;
  for (long n = 0; n < n_steps; ++n) {
    const double h = std::min(c.h, T - t);
    const double sq = std::sqrt(h);
    for (auto& x : dW) x = sq * normal(rng);
    try {
      step(c, noise, ws, X, t, h, dW, Xn, traj);
    } catch (const SolverError& first) {
      // retry as 2, 4, 8 substeps with Brownian-bridge refinement of dW
      bool ok = false;
      for (int level = 1; level <= 3 && !ok; ++level) {
        ++traj.retries;
        const int parts = 1 << level;
        const double hs = h / parts;
        // split dW into `parts` conditionally Gaussian pieces summing to dW
        std::vector<std::vector<double>> pieces(static_cast<std::size_t>(parts), std::vector<double>(dW.size()));
        for (std::size_t j = 0; j < dW.size(); ++j) {
          double remaining = dW[j];
          for (int q = 0; q < parts; ++q) {
            const int left = parts - q;
            if (left == 1) {
              pieces[static_cast<std::size_t>(q)][j] = remaining;
              break;
            }
            const double mean = remaining / left;
            const double var = hs * (left - 1.0) / left;
            const double piece = mean + std::sqrt(var) * normal(rng);
            pieces[static_cast<std::size_t>(q)][j] = piece;
            remaining -= piece;
          }
        }
        try {
          std::copy(X.begin(), X.end(), Xmid.begin());
          ws.solver.reset();
          for (int q = 0; q < parts; ++q) {
            step(c, noise, ws, Xmid, t + q * hs, hs, pieces[static_cast<std::size_t>(q)], Xn, traj);
            std::copy(Xn.begin(), Xn.end(), Xmid.begin());
          }
          ok = true;
        } catch (const SolverError&) {
          ws.solver.reset();
        }
      }
      if (!ok) {
        traj.failed = true;
        traj.failure = first.what();
        return traj;
      }
    }
    const double t_next = (n + 1 == n_steps) ? T : t + h;
    const double norm_next = std::sqrt(h_norm_sq(Xn, lam));
    if (!crossed && norm_next <= eps) {
      crossed = true;
      traj.extinct = true;
      traj.crossing_step = h;
      traj.hitting_time = t + h * (norm - eps) / (norm - norm_next);
    }
    if (crossed && norm_next <= eps_fine) {
      traj.hitting_time_fine = t + h * (norm - eps_fine) / (norm - norm_next);
      if (norm <= eps_fine) traj.hitting_time_fine = t;
      t = t_next;
      break;
    }
    std::swap(X, Xn);
    norm = norm_next;
    t = t_next;
    while (next_slot <= static_cast<std::size_t>(K) &&
           traj.curve_t[next_slot] <= t + 1e-9 * c.h) {
      if (!crossed) record(next_slot, X);
      ++next_slot;
    }
  }
  if (!traj.extinct) traj.hitting_time = T;
  return traj;
}

// ---------------------------------------------------------------------------
// Ensembles

struct Wilson {
  double lo = 0.0;
  double hi = 1.0;
};

inline Wilson wilson_interval(long successes, long n, double z = 1.959963984540054) {
  if (n <= 0) return {};
  const double nn = static_cast<double>(n);
  const double phat = successes / nn;
  const double z2 = z * z;
  const double centre = (phat + z2 / (2.0 * nn)) / (1.0 + z2 / nn);
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / (1.0 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  long count = 0;
};

inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  out.count = static_cast<long>(xs.size());
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / xs.size();
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(v / (xs.size() - 1) / xs.size());
  }
  return out;
}

struct BetaMoment {
  double beta = 0.0;
  MeanSe estimate;  // E exp(beta (tau ^ T_max))
};

struct EnsembleStats {
  long M = 0;
  long failed = 0;
  long extinct = 0;
  double extinction_fraction = 0.0;
  Wilson wilson;
  std::vector<BetaMoment> beta_moments;
  MeanSe tau_extinct;  // on the extinct subset
  MeanSe tau_censored;  // tau ^ T_max over all successful trajectories
  bool all_extinct = false;
  double max_threshold_shift = 0.0;      // max |tau(eps/10) - tau(eps)|
  double max_crossing_step = 0.0;
  bool threshold_insensitive = true;     // every shift below its crossing step
  long total_retries = 0;
  double max_solver_residual = 0.0;
  double max_dissipativity_excess = 0.0;
  long positivity_violations = 0;
  double min_positivity_ratio = 0.0;
  std::vector<double> curve_t;
  std::vector<MeanSe> mean_H2, mean_L2, mean_Lp;
  std::vector<std::vector<double>> curves_H2;  // per successful trajectory, index order
  std::vector<Trajectory> trajectories;        // kept when requested
};

/// Runs M_traj trajectories on `threads` workers. Work is handed out by an
/// atomic counter; results are stored by index and reduced in index order,
/// so the statistics do not depend on the worker count.
inline EnsembleStats run_ensemble(const SimConfig& c, int threads = 1, bool keep_trajectories = false) {
  validate(c);
  auto transform = std::make_shared<const SineTransform>(*c.op, c.effective_grid());
  const bool forms = c.record_steps && (c.noise.kind == NoiseKind::diagonal || c.noise.kind == NoiseKind::uncoloured);
  const NoiseModel noise(c.noise, c.op, transform, forms);
  const std::size_t M = static_cast<std::size_t>(c.M_traj);
  std::vector<Trajectory> trajs(M);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < M; i = next.fetch_add(1)) trajs[i] = run_trajectory(c, i, noise, transform);
  };
  const int T = std::max(1, std::min<int>(threads, c.M_traj));
  if (T == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < T; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EnsembleStats s;
  s.M = static_cast<long>(M);
  std::vector<double> tau_ext, tau_cens;
  for (const auto& tr : trajs) {
    s.total_retries += tr.retries;
    if (tr.failed) {
      ++s.failed;
      continue;
    }
    s.max_solver_residual = std::max(s.max_solver_residual, tr.max_solver_residual);
    s.max_dissipativity_excess = std::max(s.max_dissipativity_excess, tr.max_dissipativity_excess);
    s.positivity_violations += tr.positivity_violations;
    s.min_positivity_ratio = std::min(s.min_positivity_ratio, tr.min_positivity_ratio);
    tau_cens.push_back(tr.hitting_time);
    if (tr.extinct) {
      ++s.extinct;
      tau_ext.push_back(tr.hitting_time);
      s.max_crossing_step = std::max(s.max_crossing_step, tr.crossing_step);
      if (tr.hitting_time_fine) {
        const double shift = std::abs(*tr.hitting_time_fine - tr.hitting_time);
        s.max_threshold_shift = std::max(s.max_threshold_shift, shift);
        if (shift >= tr.crossing_step) s.threshold_insensitive = false;
      }
    }
  }
  if (s.failed > 0 && static_cast<double>(s.failed) > 0.01 * static_cast<double>(M))
    throw EnsembleError("more than 1% of trajectories failed (" + std::to_string(s.failed) + " of " +
                        std::to_string(M) + "); reduce h");
  const long ok = s.M - s.failed;
  s.extinction_fraction = ok > 0 ? static_cast<double>(s.extinct) / ok : 0.0;
  s.wilson = wilson_interval(s.extinct, ok);
  s.all_extinct = ok > 0 && s.extinct == ok;
  s.tau_extinct = mean_se(tau_ext);
  s.tau_censored = mean_se(tau_cens);
  for (double b : c.betas) {
    std::vector<double> e;
    e.reserve(tau_cens.size());
    for (double tau : tau_cens) e.push_back(std::exp(b * tau));
    s.beta_moments.push_back({b, mean_se(e)});
  }
  s.curve_t = ok > 0 ? trajs.front().curve_t : std::vector<double>{};
  const std::size_t K = static_cast<std::size_t>(c.checkpoints) + 1;
  std::vector<double> col;
  for (auto [dst, which] : {std::pair{&s.mean_H2, 0}, std::pair{&s.mean_L2, 1}, std::pair{&s.mean_Lp, 2}}) {
    dst->resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      col.clear();
      for (const auto& tr : trajs) {
        if (tr.failed) continue;
        const auto& curve = which == 0 ? tr.curve_H2 : (which == 1 ? tr.curve_L2 : tr.curve_Lp);
        col.push_back(curve[k]);
      }
      (*dst)[k] = mean_se(col);
    }
  }
  for (auto& tr : trajs) {
    if (tr.failed) continue;
    s.curves_H2.push_back(tr.curve_H2);
    if (s.curve_t.empty()) s.curve_t = tr.curve_t;
  }
  if (keep_trajectories) s.trajectories = std::move(trajs);
  return s;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct ItoResidual {
  std::vector<double> residuals;
  double max_abs = 0.0;
  double rms = 0.0;
  double cumulative = 0.0;
};

/// R_n = d||X||_H^2 + 2 h <v, eta>_2 - h ||B(v)||_HS^2 - 2 <B(v) dW, v>_H per recorded step.
inline ItoResidual ito_residual(const Trajectory& traj) {
  ItoResidual out;
  double ss = 0.0;
  for (const auto& s : traj.steps) {
    const double r = (s.next_H2 - s.x_H2) + s.drift - s.hs - s.martingale;
    out.residuals.push_back(r);
    out.max_abs = std::max(out.max_abs, std::abs(r));
    ss += r * r;
    out.cumulative += r;
  }
  if (!out.residuals.empty()) out.rms = std::sqrt(ss / out.residuals.size());
  return out;
}

struct SupermartingaleCheck {
  bool pass = true;
  double max_uptick = 0.0;        // largest mean increase, in SE units when SE > 0
  double max_uptick_abs = 0.0;
  std::pair<double, double> worst_times{0.0, 0.0};
  std::vector<MeanSe> compensated;  // mean of e^{-2 rho3 t} ||X_t||_H^2 per checkpoint
};

/// Checks that the mean of e^{-2 rho3 t}||X_t||_H^2 is nonincreasing up to
/// 3 standard errors of the per-trajectory difference, over all pairs s < t.
inline SupermartingaleCheck supermartingale_check(const EnsembleStats& stats, double rho3) {
  SupermartingaleCheck out;
  const std::size_t K = stats.curve_t.size();
  const std::size_t M = stats.curves_H2.size();
  if (K == 0 || M == 0) return out;
  std::vector<double> comp(M * K);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < K; ++k)
      comp[i * K + k] = std::exp(-2.0 * rho3 * stats.curve_t[k]) * stats.curves_H2[i][k];
  std::vector<double> col(M);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < M; ++i) col[i] = comp[i * K + k];
    out.compensated.push_back(mean_se(col));
  }
  const double scale = out.compensated.front().mean;
  const double slack = 1e-9 * scale;
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = a + 1; b < K; ++b) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < M; ++i) {
        const double d = comp[i * K + b] - comp[i * K + a];
        s += d;
        s2 += d * d;
      }
      const double mean = s / M;
      const double var = M > 1 ? std::max(0.0, (s2 - M * mean * mean) / (M - 1)) : 0.0;
      const double se = std::sqrt(var / M);
      if (mean > out.max_uptick_abs) out.max_uptick_abs = mean;
      const double score = se > 0.0 ? mean / se : (mean > slack ? std::numeric_limits<double>::infinity() : 0.0);
      if (score > out.max_uptick) {
        out.max_uptick = score;
        out.worst_times = {stats.curve_t[a], stats.curve_t[b]};
      }
      if (mean > 3.0 * se + slack) out.pass = false;
    }
  }
  return out;
}

}  // namespace extinction
