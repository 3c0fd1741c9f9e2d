#pragma once

// Eigenbasis of L = (-Delta)^alpha with Dirichlet conditions on a box, sine
// transforms between coefficients and the interior grid, and the norms used
// throughout (H = dual of the form domain, L^2, L^p).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extinction/errors.hpp"

namespace extinction {

inline constexpr double kPi = std::numbers::pi;

/// Default ultracontractivity constant: the Dirichlet heat kernel on any box is
/// dominated by the Gaussian kernel, so ||P_t||_{1->inf} <= (4 pi t)^{-n/2}.
inline constexpr double kDefaultCInf = 4.0 * std::numbers::pi;

/// Spectral description of L. Eigenvalues are flattened over the tensor grid
/// of multi-indices and sorted nondecreasing; ties are broken by the
/// lexicographic order of the multi-index.
struct OperatorSpec {
  int n = 1;
  double alpha = 1.0;
  std::vector<double> side_lengths;
  int modes_per_axis = 0;
  std::vector<double> lambda;
  std::vector<std::vector<int>> multi_index;  // empty for user-supplied tables
  double d_eff = 1.0;
  double c_inf = kDefaultCInf;
  double lambda1 = 0.0;

  std::size_t size() const noexcept { return lambda.size(); }
  bool has_box() const noexcept { return !multi_index.empty(); }
};

inline OperatorSpec build_operator(int n, double alpha, std::vector<double> side_lengths,
                                   int modes_per_axis,
                                   std::optional<double> c_inf = std::nullopt) {
  if (n < 1) throw ParameterError("operator: dimension n must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ParameterError("operator: alpha must lie in (0,1]");
  if (modes_per_axis < 1) throw ParameterError("operator: modes per axis must be >= 1");
  if (side_lengths.empty()) side_lengths.assign(static_cast<std::size_t>(n), 1.0);
  if (side_lengths.size() != static_cast<std::size_t>(n))
    throw ParameterError("operator: side_lengths must have n entries");
  for (double len : side_lengths)
    if (!(len > 0.0) || !std::isfinite(len)) throw ParameterError("operator: side lengths must be positive");
  if (c_inf && !(*c_inf > 0.0)) throw ParameterError("operator: c_inf must be positive");

  struct Entry {
    double value;
    std::vector<int> index;
  };
  std::vector<Entry> entries;
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(modes_per_axis);
  entries.reserve(total);

  std::vector<int> idx(static_cast<std::size_t>(n), 1);
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (std::size_t count = 0; count < total; ++count) {
    for (int i = 0; i < n; ++i) {
      const double k = idx[static_cast<std::size_t>(i)];
      const double len = side_lengths[static_cast<std::size_t>(i)];
      terms[static_cast<std::size_t>(i)] = k * k / (len * len);
    }
    // summing in sorted order makes permuted multi-indices give identical doubles
    std::sort(terms.begin(), terms.end());
    const double base = kPi * kPi * std::accumulate(terms.begin(), terms.end(), 0.0);
    entries.push_back({alpha == 1.0 ? base : std::pow(base, alpha), idx});
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] <= modes_per_axis) break;
      idx[static_cast<std::size_t>(i)] = 1;
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value < b.value;
    return a.index < b.index;
  });

  OperatorSpec op;
  op.n = n;
  op.alpha = alpha;
  op.side_lengths = std::move(side_lengths);
  op.modes_per_axis = modes_per_axis;
  op.d_eff = n / alpha;
  op.c_inf = c_inf.value_or(kDefaultCInf);
  op.lambda.reserve(total);
  op.multi_index.reserve(total);
  for (auto& e : entries) {
    op.lambda.push_back(e.value);
    op.multi_index.push_back(std::move(e.index));
  }
  op.lambda1 = op.lambda.front();
  return op;
}

/// Operator given only through its eigenvalues (e.g. -Delta + V computed elsewhere).
/// No physical grid is attached, so transforms and L^p norms are unavailable.
inline OperatorSpec operator_from_table(std::vector<double> eigenvalues, double d_eff,
                                        double c_inf = kDefaultCInf) {
  if (eigenvalues.empty()) throw ParameterError("operator: empty eigenvalue table");
  for (double v : eigenvalues)
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError("operator: eigenvalues must be positive");
  if (!(d_eff > 0.0)) throw ParameterError("operator: d_eff must be positive");
  if (!(c_inf > 0.0)) throw ParameterError("operator: c_inf must be positive");
  std::sort(eigenvalues.begin(), eigenvalues.end());
  OperatorSpec op;
  op.n = 0;
  op.alpha = 1.0;
  op.modes_per_axis = 0;
  op.d_eff = d_eff;
  op.c_inf = c_inf;
  op.lambda = std::move(eigenvalues);
  op.lambda1 = op.lambda.front();
  return op;
}

/// State as coefficients a_k = <x, e_k>_2 in the sorted eigenbasis.
struct SpectralField {
  std::vector<double> coeffs;
  std::shared_ptr<const OperatorSpec> op;
};

inline double h_norm_sq(std::span<const double> coeffs, std::span<const double> lambda) {
  if (coeffs.size() != lambda.size()) throw ParameterError("h_norm: coefficient/eigenvalue size mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < coeffs.size(); ++k) s += coeffs[k] * coeffs[k] / lambda[k];
  return s;
}

inline double l2_norm_sq(std::span<const double> coeffs) {
  double s = 0.0;
  for (double a : coeffs) s += a * a;
  return s;
}

inline double h_norm(const SpectralField& x) { return std::sqrt(h_norm_sq(x.coeffs, x.op->lambda)); }
inline double l2_norm(const SpectralField& x) { return std::sqrt(l2_norm_sq(x.coeffs)); }

/// H inner product <x, L^{-1} y>_2.
inline double h_inner(std::span<const double> x, std::span<const double> y, std::span<const double> lambda) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k] / lambda[k];
  return s;
}

/// Sine transform between the sorted coefficient vector and the uniform
/// interior grid s_j = j L / (M+1), j = 1..M, on each axis. With quadrature
/// weight prod_i L_i/(M+1) the discrete basis is exactly orthonormal for
/// modes <= M, so the transform pair is exact on the truncated space.
class SineTransform {
public:
  SineTransform(const OperatorSpec& op, int grid_size) : n_(op.n), modes_(op.modes_per_axis), grid_(grid_size) {
    if (!op.has_box()) throw ParameterError("transform: operator has no box geometry");
    if (grid_size < op.modes_per_axis)
      throw ParameterError("transform: grid size " + std::to_string(grid_size) + " is smaller than mode count " +
                           std::to_string(op.modes_per_axis) + " (aliasing)");
    const auto M = static_cast<std::size_t>(grid_);
    const auto N = static_cast<std::size_t>(modes_);
    weight_ = 1.0;
    basis_.resize(static_cast<std::size_t>(n_));
    for (int axis = 0; axis < n_; ++axis) {
      const double len = op.side_lengths[static_cast<std::size_t>(axis)];
      weight_ *= len / (grid_ + 1.0);
      auto& b = basis_[static_cast<std::size_t>(axis)];
      b.resize(M * N);
      const double amp = std::sqrt(2.0 / len);
      for (std::size_t j = 0; j < M; ++j)
        for (std::size_t k = 0; k < N; ++k)
          b[j * N + k] = amp * std::sin(kPi * static_cast<double>((k + 1) * (j + 1)) / (grid_ + 1.0));
    }
    // flattened mode -> offset in the N^n coefficient tensor (axis 0 slowest)
    offset_.resize(op.size());
    for (std::size_t f = 0; f < op.size(); ++f) {
      std::size_t off = 0;
      for (int axis = 0; axis < n_; ++axis)
        off = off * N + static_cast<std::size_t>(op.multi_index[f][static_cast<std::size_t>(axis)] - 1);
      offset_[f] = off;
    }
    identity_order_ = true;
    for (std::size_t f = 0; f < offset_.size(); ++f)
      if (offset_[f] != f) identity_order_ = false;
    grid_points_ = 1;
    for (int axis = 0; axis < n_; ++axis) grid_points_ *= M;
  }

  std::size_t modes() const noexcept { return offset_.size(); }
  std::size_t grid_points() const noexcept { return grid_points_; }
  int grid_size() const noexcept { return grid_; }
  int dimension() const noexcept { return n_; }
  double weight() const noexcept { return weight_; }

  void to_physical(std::span<const double> coeffs, std::span<double> values) const {
    check_sizes(coeffs.size(), values.size());
    if (n_ == 1 && identity_order_) {
      const auto N = static_cast<std::size_t>(modes_);
      const auto& b = basis_[0];
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double* row = b.data() + j * N;
        double s = 0.0;
        for (std::size_t k = 0; k < N; ++k) s += row[k] * coeffs[k];
        values[j] = s;
      }
      return;
    }
    std::vector<double> tensor(coefficient_tensor_size(), 0.0);
    for (std::size_t f = 0; f < offset_.size(); ++f) tensor[offset_[f]] = coeffs[f];
    std::vector<std::size_t> dims(static_cast<std::size_t>(n_), static_cast<std::size_t>(modes_));
    for (int axis = 0; axis < n_; ++axis) {
      tensor = apply_axis(tensor, dims, static_cast<std::size_t>(axis), basis_[static_cast<std::size_t>(axis)],
                          static_cast<std::size_t>(grid_), static_cast<std::size_t>(modes_), false);
      dims[static_cast<std::size_t>(axis)] = static_cast<std::size_t>(grid_);
    }
    std::copy(tensor.begin(), tensor.end(), values.begin());
  }

  void to_spectral(std::span<const double> values, std::span<double> coeffs) const {
    check_sizes(coeffs.size(), values.size());
    if (n_ == 1 && identity_order_) {
      const auto N = static_cast<std::size_t>(modes_);
      const auto& b = basis_[0];
      std::fill(coeffs.begin(), coeffs.end(), 0.0);
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double* row = b.data() + j * N;
        const double v = values[j] * weight_;
        for (std::size_t k = 0; k < N; ++k) coeffs[k] += row[k] * v;
      }
      return;
    }
    std::vector<double> tensor(values.begin(), values.end());
    std::vector<std::size_t> dims(static_cast<std::size_t>(n_), static_cast<std::size_t>(grid_));
    for (int axis = 0; axis < n_; ++axis) {
      tensor = apply_axis(tensor, dims, static_cast<std::size_t>(axis), basis_[static_cast<std::size_t>(axis)],
                          static_cast<std::size_t>(grid_), static_cast<std::size_t>(modes_), true);
      dims[static_cast<std::size_t>(axis)] = static_cast<std::size_t>(modes_);
    }
    for (std::size_t f = 0; f < offset_.size(); ++f) coeffs[f] = tensor[offset_[f]] * weight_;
  }

  std::vector<double> to_physical(std::span<const double> coeffs) const {
    std::vector<double> out(grid_points_);
    to_physical(coeffs, out);
    return out;
  }
  std::vector<double> to_spectral(std::span<const double> values) const {
    std::vector<double> out(modes());
    to_spectral(values, out);
    return out;
  }

  /// Interior node coordinates along one axis.
  std::vector<double> nodes(const OperatorSpec& op, int axis) const {
    std::vector<double> s(static_cast<std::size_t>(grid_));
    const double len = op.side_lengths.at(static_cast<std::size_t>(axis));
    for (int j = 0; j < grid_; ++j) s[static_cast<std::size_t>(j)] = (j + 1) * len / (grid_ + 1.0);
    return s;
  }

private:
  std::size_t coefficient_tensor_size() const {
    std::size_t t = 1;
    for (int i = 0; i < n_; ++i) t *= static_cast<std::size_t>(modes_);
    return t;
  }

  void check_sizes(std::size_t ncoeff, std::size_t nvals) const {
    if (ncoeff != offset_.size()) throw ParameterError("transform: coefficient vector has wrong length");
    if (nvals != grid_points_) throw ParameterError("transform: grid vector has wrong length");
  }

  // Contract one tensor axis with the M x N basis matrix: forward maps N -> M,
  // transpose maps M -> N.
  static std::vector<double> apply_axis(const std::vector<double>& in, const std::vector<std::size_t>& dims,
                                        std::size_t axis, const std::vector<double>& basis, std::size_t M,
                                        std::size_t N, bool transpose) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
    for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
    const std::size_t in_len = transpose ? M : N;
    const std::size_t out_len = transpose ? N : M;
    std::vector<double> out(outer * out_len * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t p = 0; p < out_len; ++p)
        for (std::size_t q = 0; q < in_len; ++q) {
          const double m = transpose ? basis[q * N + p] : basis[p * N + q];
          const double* src = in.data() + (o * in_len + q) * inner;
          double* dst = out.data() + (o * out_len + p) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += m * src[i];
        }
    return out;
  }

  int n_;
  int modes_;
  int grid_;
  double weight_ = 1.0;
  std::size_t grid_points_ = 0;
  bool identity_order_ = false;
  std::vector<std::vector<double>> basis_;
  std::vector<std::size_t> offset_;
};

inline std::vector<double> to_physical(const SpectralField& x, int grid_size) {
  return SineTransform(*x.op, grid_size).to_physical(x.coeffs);
}

inline SpectralField to_spectral(std::span<const double> values, std::shared_ptr<const OperatorSpec> op,
                                 int grid_size) {
  SpectralField f;
  f.coeffs = SineTransform(*op, grid_size).to_spectral(values);
  f.op = std::move(op);
  return f;
}

/// Trapezoid quadrature of |x|^p over interior nodes (boundary values are zero).
inline double lp_norm_grid(std::span<const double> values, double p, double weight) {
  if (!(p >= 1.0)) throw DomainError("lp_norm: p must be >= 1");
  double s = 0.0;
  if (p == 2.0) {
    for (double v : values) s += v * v;
    return std::sqrt(s * weight);
  }
  if (p == 1.0) {
    for (double v : values) s += std::abs(v);
    return s * weight;
  }
  for (double v : values) s += std::pow(std::abs(v), p);
  return std::pow(s * weight, 1.0 / p);
}

inline double lp_norm(const SpectralField& x, double p, const SineTransform& transform) {
  const auto values = transform.to_physical(x.coeffs);
  return lp_norm_grid(values, p, transform.weight());
}

inline double lp_norm(const SpectralField& x, double p, int grid_size) {
  return lp_norm(x, p, SineTransform(*x.op, grid_size));
}

/// Riesz-Thorin type bound on ||P_t||_{1+r -> (1+r)/r} built from (U):
/// (c_inf t)^{-d(1-r)/(2(1+r))} exp(-lambda1 (1-r) t / (1+r)).
inline double heat_norm_bound(double t, double r, double lambda1, double d_eff, double c_inf) {
  if (!(t > 0.0)) throw DomainError("heat_norm_bound: t must be positive");
  if (!(r >= 0.0 && r < 1.0)) throw DomainError("heat_norm_bound: r must lie in [0,1)");
  const double power = d_eff * (1.0 - r) / (2.0 * (1.0 + r));
  return std::pow(c_inf * t, -power) * std::exp(-lambda1 * (1.0 - r) * t / (1.0 + r));
}

inline double heat_norm_bound(double t, double r, const OperatorSpec& op) {
  return heat_norm_bound(t, r, op.lambda1, op.d_eff, op.c_inf);
}

}  // namespace extinction
