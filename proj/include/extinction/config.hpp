#pragma once

// Run configuration: TOML parsing with strict key checking, canonical
// re-emission and the SHA-256 config hash embedded in every output.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <toml.hpp>

#include "extinction/errors.hpp"

namespace extinction {

inline constexpr const char* kToolVersion = "1.0.0";

struct OperatorBlock {
  int n = 1;
  double alpha = 1.0;
  std::vector<double> side_lengths;
  int modes = 16;
  std::optional<double> c_inf;
  std::vector<double> eigenvalues;  // user table instead of a box
  std::optional<double> d_eff;
  std::vector<double> sup_norm_sq;  // ||e_k||_inf^2 table for rho0
  bool operator==(const OperatorBlock&) const = default;
};

struct GraphBlock {
  std::string kind = "soc";
  std::optional<double> theta1, theta2, r;
  bool odd_extend = false;
  std::optional<double> C, q, kappa;
  bool operator==(const GraphBlock&) const = default;
};

struct NoiseBlock {
  std::string kind = "none";
  std::string mu_rule = "list";
  std::vector<double> mu;
  bool open_tail = false;
  double a = 0.0;
  double p = 0.0;
  double sigma = 0.0;
  double c = 0.0;
  double c_tilde = 0.0;
  std::vector<double> direction;
  std::optional<double> epsilon;
  bool operator==(const NoiseBlock&) const = default;
};

struct SimBlock {
  double h = 1e-4;
  double T_max = 1.0;
  double eps_ext = 0.0;
  double delta_yosida = 0.0;
  int M_traj = 1;
  std::uint64_t seed = 0;
  std::string scheme = "semi_implicit_resolvent";
  double solver_tol = 1e-10;
  int solver_max_iter = 20000;
  int checkpoints = 256;
  int grid_size = 0;
  std::string x0 = "e1";
  double x0_scale = 1.0;
  std::vector<double> x0_coeffs;
  bool record_steps = false;
  bool operator==(const SimBlock&) const = default;
};

struct BoundsBlock {
  std::optional<double> theta;
  int theta_grid = 16;
  std::vector<double> betas;
  double beta_fraction = 0.5;
  std::vector<std::string> request;
  bool operator==(const BoundsBlock&) const = default;
};

struct OutputBlock {
  std::string dir = "out";
  bool operator==(const OutputBlock&) const = default;
};

struct RunConfig {
  OperatorBlock op;
  GraphBlock graph;
  NoiseBlock noise;
  SimBlock sim;
  BoundsBlock bounds;
  OutputBlock output;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string where(const toml::node& n) {
  const auto& src = n.source();
  if (src.begin.line == 0) return "";
  return " (line " + std::to_string(src.begin.line) + ")";
}

inline void check_keys(const toml::table& t, const std::string& path, const std::set<std::string>& allowed) {
  for (auto&& [k, v] : t) {
    const std::string key(k.str());
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + path + key + "'" + where(v));
  }
}

inline double get_double(const toml::node& n, const std::string& key) {
  if (auto v = n.value<double>()) return *v;
  throw ConfigError("config: '" + key + "' must be a number" + where(n));
}

inline std::int64_t get_int(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<std::int64_t>()) return *v;
  throw ConfigError("config: '" + key + "' must be an integer" + where(n));
}

inline bool get_bool(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<bool>()) return *v;
  throw ConfigError("config: '" + key + "' must be a boolean" + where(n));
}

inline std::string get_string(const toml::node& n, const std::string& key) {
  if (auto v = n.value_exact<std::string>()) return *v;
  throw ConfigError("config: '" + key + "' must be a string" + where(n));
}

inline std::vector<double> get_doubles(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError("config: '" + key + "' must be an array of numbers" + where(n));
  std::vector<double> out;
  for (const auto& e : *arr) out.push_back(get_double(e, key));
  return out;
}

inline std::vector<std::string> get_strings(const toml::node& n, const std::string& key) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError("config: '" + key + "' must be an array of strings" + where(n));
  std::vector<std::string> out;
  for (const auto& e : *arr) out.push_back(get_string(e, key));
  return out;
}

inline const toml::table* sub_table(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw ConfigError(std::string("config: '") + name + "' must be a table" + where(*node));
  return t;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

}  // namespace detail

/// Range checks that do not need derived constants.
inline void validate_ranges(const RunConfig& c) {
  using detail::require;
  require(c.op.n >= 1, "operator.n must be >= 1");
  require(c.op.alpha > 0.0 && c.op.alpha <= 1.0, "operator.alpha must lie in (0,1]");
  require(c.op.modes >= 1, "operator.modes must be >= 1");
  require(c.op.side_lengths.empty() || c.op.side_lengths.size() == static_cast<std::size_t>(c.op.n),
          "operator.side_lengths must have n entries");
  for (double l : c.op.side_lengths) require(l > 0.0, "operator.side_lengths must be positive");
  if (c.op.c_inf) require(*c.op.c_inf > 0.0, "operator.c_inf must be positive");
  if (!c.op.eigenvalues.empty()) require(c.op.d_eff.has_value(), "operator.eigenvalues needs operator.d_eff");
  static const std::set<std::string> graphs{"soc", "fast_diffusion", "power_plus_linear", "linear"};
  require(graphs.count(c.graph.kind) > 0, "graph.kind must be one of soc, fast_diffusion, power_plus_linear, linear");
  static const std::set<std::string> noises{"none", "diagonal", "uncoloured", "rank_one", "finite_mode", "mixed"};
  require(noises.count(c.noise.kind) > 0,
          "noise.kind must be one of none, diagonal, uncoloured, rank_one, finite_mode, mixed");
  require(c.noise.mu_rule == "list" || c.noise.mu_rule == "powerlaw", "noise.mu_rule must be list or powerlaw");
  if (c.noise.epsilon) require(*c.noise.epsilon > 0.0, "noise.epsilon must be positive");
  require(c.sim.h > 0.0, "sim.h must be positive");
  require(c.sim.T_max > c.sim.h, "sim.T_max must exceed sim.h");
  require(c.sim.eps_ext >= 0.0, "sim.eps_ext must be >= 0 (0 selects the default)");
  require(c.sim.delta_yosida >= 0.0, "sim.delta_yosida must be >= 0");
  require(c.sim.M_traj >= 1, "sim.M_traj must be >= 1");
  require(c.sim.scheme == "semi_implicit_resolvent" || c.sim.scheme == "explicit_yosida",
          "sim.scheme must be semi_implicit_resolvent or explicit_yosida");
  require(c.sim.solver_tol > 0.0, "sim.solver_tol must be positive");
  require(c.sim.solver_max_iter >= 1, "sim.solver_max_iter must be >= 1");
  require(c.sim.checkpoints >= 1, "sim.checkpoints must be >= 1");
  require(c.sim.grid_size >= 0, "sim.grid_size must be >= 0");
  require(c.sim.x0 == "e1" || c.sim.x0 == "bump" || c.sim.x0 == "coefficients",
          "sim.x0 must be e1, bump or coefficients");
  if (c.sim.x0 == "coefficients") require(!c.sim.x0_coeffs.empty(), "sim.x0 = coefficients needs sim.x0_coeffs");
  if (c.bounds.theta) require(*c.bounds.theta > 0.0 && *c.bounds.theta <= 1.0, "bounds.theta must lie in (0,1]");
  require(c.bounds.theta_grid >= 1, "bounds.theta_grid must be >= 1");
  require(c.bounds.beta_fraction > 0.0 && c.bounds.beta_fraction < 1.0, "bounds.beta_fraction must lie in (0,1)");
  for (double b : c.bounds.betas) require(b > 0.0, "bounds.betas must be positive");
  static const std::set<std::string> requests{"case1", "case2", "case3", "envelope", "zhang", "uncoloured"};
  for (const auto& r : c.bounds.request)
    require(requests.count(r) > 0, "bounds.request entries must be case1, case2, case3, envelope, zhang or uncoloured");
}

inline RunConfig parse_config_table(const toml::table& root) {
  using namespace detail;
  RunConfig c;
  check_keys(root, "", {"operator", "graph", "noise", "sim", "bounds", "output"});
  const auto* op = sub_table(root, "operator");
  if (!op) throw ConfigError("config: missing [operator] table");
  check_keys(*op, "operator.", {"n", "alpha", "side_lengths", "modes", "c_inf", "eigenvalues", "d_eff", "sup_norm_sq"});
  for (auto&& [k, v] : *op) {
    const std::string key = "operator." + std::string(k.str());
    if (k == "n") c.op.n = static_cast<int>(get_int(v, key));
    else if (k == "alpha") c.op.alpha = get_double(v, key);
    else if (k == "side_lengths") c.op.side_lengths = get_doubles(v, key);
    else if (k == "modes") c.op.modes = static_cast<int>(get_int(v, key));
    else if (k == "c_inf") c.op.c_inf = get_double(v, key);
    else if (k == "eigenvalues") c.op.eigenvalues = get_doubles(v, key);
    else if (k == "d_eff") c.op.d_eff = get_double(v, key);
    else if (k == "sup_norm_sq") c.op.sup_norm_sq = get_doubles(v, key);
  }
  const auto* gr = sub_table(root, "graph");
  if (!gr) throw ConfigError("config: missing [graph] table");
  check_keys(*gr, "graph.", {"kind", "theta1", "theta2", "r", "odd_extend", "C", "q", "kappa"});
  for (auto&& [k, v] : *gr) {
    const std::string key = "graph." + std::string(k.str());
    if (k == "kind") c.graph.kind = get_string(v, key);
    else if (k == "theta1") c.graph.theta1 = get_double(v, key);
    else if (k == "theta2") c.graph.theta2 = get_double(v, key);
    else if (k == "r") c.graph.r = get_double(v, key);
    else if (k == "odd_extend") c.graph.odd_extend = get_bool(v, key);
    else if (k == "C") c.graph.C = get_double(v, key);
    else if (k == "q") c.graph.q = get_double(v, key);
    else if (k == "kappa") c.graph.kappa = get_double(v, key);
  }
  if (const auto* no = sub_table(root, "noise")) {
    check_keys(*no, "noise.", {"kind", "mu_rule", "mu", "open_tail", "a", "p", "sigma", "c", "c_tilde", "direction",
                               "epsilon"});
    for (auto&& [k, v] : *no) {
      const std::string key = "noise." + std::string(k.str());
      if (k == "kind") c.noise.kind = get_string(v, key);
      else if (k == "mu_rule") c.noise.mu_rule = get_string(v, key);
      else if (k == "mu") c.noise.mu = get_doubles(v, key);
      else if (k == "open_tail") c.noise.open_tail = get_bool(v, key);
      else if (k == "a") c.noise.a = get_double(v, key);
      else if (k == "p") c.noise.p = get_double(v, key);
      else if (k == "sigma") c.noise.sigma = get_double(v, key);
      else if (k == "c") c.noise.c = get_double(v, key);
      else if (k == "c_tilde") c.noise.c_tilde = get_double(v, key);
      else if (k == "direction") c.noise.direction = get_doubles(v, key);
      else if (k == "epsilon") c.noise.epsilon = get_double(v, key);
    }
  }
  if (const auto* si = sub_table(root, "sim")) {
    check_keys(*si, "sim.", {"h", "T_max", "eps_ext", "delta_yosida", "M_traj", "seed", "scheme", "solver_tol",
                             "solver_max_iter", "checkpoints", "grid_size", "x0", "x0_scale", "x0_coeffs",
                             "record_steps"});
    for (auto&& [k, v] : *si) {
      const std::string key = "sim." + std::string(k.str());
      if (k == "h") c.sim.h = get_double(v, key);
      else if (k == "T_max") c.sim.T_max = get_double(v, key);
      else if (k == "eps_ext") c.sim.eps_ext = get_double(v, key);
      else if (k == "delta_yosida") c.sim.delta_yosida = get_double(v, key);
      else if (k == "M_traj") c.sim.M_traj = static_cast<int>(get_int(v, key));
      else if (k == "seed") {
        const auto s = get_int(v, key);
        if (s < 0) throw ConfigError("config: 'sim.seed' must be >= 0" + where(v));
        c.sim.seed = static_cast<std::uint64_t>(s);
      } else if (k == "scheme") c.sim.scheme = get_string(v, key);
      else if (k == "solver_tol") c.sim.solver_tol = get_double(v, key);
      else if (k == "solver_max_iter") c.sim.solver_max_iter = static_cast<int>(get_int(v, key));
      else if (k == "checkpoints") c.sim.checkpoints = static_cast<int>(get_int(v, key));
      else if (k == "grid_size") c.sim.grid_size = static_cast<int>(get_int(v, key));
      else if (k == "x0") c.sim.x0 = get_string(v, key);
      else if (k == "x0_scale") c.sim.x0_scale = get_double(v, key);
      else if (k == "x0_coeffs") c.sim.x0_coeffs = get_doubles(v, key);
      else if (k == "record_steps") c.sim.record_steps = get_bool(v, key);
    }
  }
  if (const auto* bo = sub_table(root, "bounds")) {
    check_keys(*bo, "bounds.", {"theta", "theta_grid", "betas", "beta_fraction", "request"});
    for (auto&& [k, v] : *bo) {
      const std::string key = "bounds." + std::string(k.str());
      if (k == "theta") c.bounds.theta = get_double(v, key);
      else if (k == "theta_grid") c.bounds.theta_grid = static_cast<int>(get_int(v, key));
      else if (k == "betas") c.bounds.betas = get_doubles(v, key);
      else if (k == "beta_fraction") c.bounds.beta_fraction = get_double(v, key);
      else if (k == "request") c.bounds.request = get_strings(v, key);
    }
  }
  if (const auto* ou = sub_table(root, "output")) {
    check_keys(*ou, "output.", {"dir"});
    if (const auto* d = ou->get("dir")) c.output.dir = get_string(*d, "output.dir");
  }
  validate_ranges(c);
  return c;
}

inline RunConfig parse_config_string(const std::string& text, const std::string& source = "config") {
  try {
    return parse_config_table(toml::parse(text, source));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config: " << e.description() << " (" << source << ", line " << e.source().begin.line << ")";
    throw ConfigError(os.str());
  }
}

inline RunConfig parse_config_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw ConfigError("config: cannot read '" + path + "'");
  std::string text;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) text.append(buf, n);
  std::fclose(f);
  return parse_config_string(text, path);
}

// ---------------------------------------------------------------------------
// canonical emission and hashing

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // keep TOML floats recognisable as floats
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace detail {
inline std::string toml_array(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt17(v[i]);
  return s + "]";
}
inline std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}
}  // namespace detail

/// Fully explicit TOML for the config. With `for_hash`, run-environment
/// fields (the output directory) are left out.
inline std::string canonical_toml(const RunConfig& c, bool for_hash = false) {
  using detail::toml_array;
  using detail::toml_string;
  std::ostringstream o;
  o << "[operator]\n";
  o << "n = " << c.op.n << "\n";
  o << "alpha = " << fmt17(c.op.alpha) << "\n";
  o << "side_lengths = " << toml_array(c.op.side_lengths) << "\n";
  o << "modes = " << c.op.modes << "\n";
  if (c.op.c_inf) o << "c_inf = " << fmt17(*c.op.c_inf) << "\n";
  o << "eigenvalues = " << toml_array(c.op.eigenvalues) << "\n";
  if (c.op.d_eff) o << "d_eff = " << fmt17(*c.op.d_eff) << "\n";
  o << "sup_norm_sq = " << toml_array(c.op.sup_norm_sq) << "\n";
  o << "\n[graph]\n";
  o << "kind = " << toml_string(c.graph.kind) << "\n";
  if (c.graph.theta1) o << "theta1 = " << fmt17(*c.graph.theta1) << "\n";
  if (c.graph.theta2) o << "theta2 = " << fmt17(*c.graph.theta2) << "\n";
  if (c.graph.r) o << "r = " << fmt17(*c.graph.r) << "\n";
  o << "odd_extend = " << (c.graph.odd_extend ? "true" : "false") << "\n";
  if (c.graph.C) o << "C = " << fmt17(*c.graph.C) << "\n";
  if (c.graph.q) o << "q = " << fmt17(*c.graph.q) << "\n";
  if (c.graph.kappa) o << "kappa = " << fmt17(*c.graph.kappa) << "\n";
  o << "\n[noise]\n";
  o << "kind = " << toml_string(c.noise.kind) << "\n";
  o << "mu_rule = " << toml_string(c.noise.mu_rule) << "\n";
  o << "mu = " << toml_array(c.noise.mu) << "\n";
  o << "open_tail = " << (c.noise.open_tail ? "true" : "false") << "\n";
  o << "a = " << fmt17(c.noise.a) << "\n";
  o << "p = " << fmt17(c.noise.p) << "\n";
  o << "sigma = " << fmt17(c.noise.sigma) << "\n";
  o << "c = " << fmt17(c.noise.c) << "\n";
  o << "c_tilde = " << fmt17(c.noise.c_tilde) << "\n";
  o << "direction = " << toml_array(c.noise.direction) << "\n";
  if (c.noise.epsilon) o << "epsilon = " << fmt17(*c.noise.epsilon) << "\n";
  o << "\n[sim]\n";
  o << "h = " << fmt17(c.sim.h) << "\n";
  o << "T_max = " << fmt17(c.sim.T_max) << "\n";
  o << "eps_ext = " << fmt17(c.sim.eps_ext) << "\n";
  o << "delta_yosida = " << fmt17(c.sim.delta_yosida) << "\n";
  o << "M_traj = " << c.sim.M_traj << "\n";
  o << "seed = " << c.sim.seed << "\n";
  o << "scheme = " << toml_string(c.sim.scheme) << "\n";
  o << "solver_tol = " << fmt17(c.sim.solver_tol) << "\n";
  o << "solver_max_iter = " << c.sim.solver_max_iter << "\n";
  o << "checkpoints = " << c.sim.checkpoints << "\n";
  o << "grid_size = " << c.sim.grid_size << "\n";
  o << "x0 = " << toml_string(c.sim.x0) << "\n";
  o << "x0_scale = " << fmt17(c.sim.x0_scale) << "\n";
  o << "x0_coeffs = " << toml_array(c.sim.x0_coeffs) << "\n";
  o << "record_steps = " << (c.sim.record_steps ? "true" : "false") << "\n";
  o << "\n[bounds]\n";
  if (c.bounds.theta) o << "theta = " << fmt17(*c.bounds.theta) << "\n";
  o << "theta_grid = " << c.bounds.theta_grid << "\n";
  o << "betas = " << toml_array(c.bounds.betas) << "\n";
  o << "beta_fraction = " << fmt17(c.bounds.beta_fraction) << "\n";
  o << "request = [";
  for (std::size_t i = 0; i < c.bounds.request.size(); ++i) o << (i ? ", " : "") << toml_string(c.bounds.request[i]);
  o << "]\n";
  if (!for_hash) o << "\n[output]\ndir = " << toml_string(c.output.dir) << "\n";
  return o.str();
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(canonical_toml(c, true)); }

}  // namespace extinction
