#pragma once

// Derived constants, result persistence and the four CLI commands.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "extinction/bounds.hpp"
#include "extinction/config.hpp"
#include "extinction/errors.hpp"
#include "extinction/noise.hpp"
#include "extinction/nonlinearity.hpp"
#include "extinction/sde.hpp"
#include "extinction/spectral.hpp"

namespace extinction {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// serialization

inline std::string g17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON number, or a string for values JSON cannot hold.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(g17(v)); }

inline Json num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

inline double read_num(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError("report: expected a number");
}

namespace detail {

inline bool is_scalar(const Json& j) { return !j.is_object() && !j.is_array(); }

inline void write_json(std::string& out, const Json& j, int level) {
  const std::string pad(static_cast<std::size_t>(2 * (level + 1)), ' ');
  const std::string pad0(static_cast<std::size_t>(2 * level), ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ",\n";
      first = false;
      out += pad + Json(it.key()).dump() + ": ";
      write_json(out, it.value(), level + 1);
    }
    out += "\n" + pad0 + "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      out += "[]";
      return;
    }
    const bool flat = std::all_of(j.begin(), j.end(), is_scalar);
    out += flat ? "[" : "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) out += flat ? ", " : ",\n";
      if (!flat) out += pad;
      write_json(out, j[i], level + 1);
    }
    out += flat ? "]" : "\n" + pad0 + "]";
  } else if (j.is_number_float()) {
    const double v = j.get<double>();
    out += std::isfinite(v) ? g17(v) : "\"" + g17(v) + "\"";
  } else {
    out += j.dump();
  }
}

}  // namespace detail

/// Keys sorted, doubles at 17 significant digits.
inline std::string dump_json(const Json& j) {
  std::string out;
  detail::write_json(out, j, 0);
  return out + "\n";
}

struct Meta {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
};

inline Json meta_json(const Meta& m) {
  return Json{{"config_hash", m.config_hash}, {"tool_version", m.tool_version}, {"seed", m.seed}};
}

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add(std::vector<std::string> row) {
    if (row.size() != columns_.size()) throw std::logic_error("csv: row width mismatch");
    rows_.push_back(std::move(row));
  }
  std::string str(const Meta& m) const {
    std::string out = "# config_hash: " + m.config_hash + "\n# tool_version: " + m.tool_version +
                      "\n# seed: " + std::to_string(m.seed) + "\n";
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += "\n";
    };
    line(columns_);
    for (const auto& r : rows_) line(r);
    return out;
  }
  std::size_t rows() const { return rows_.size(); }

private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// derived constants

struct Derived {
  RunConfig cfg;
  std::string hash;
  std::shared_ptr<const OperatorSpec> op;
  PsiGraph graph;
  NoiseSpec noise;
  double r = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  double rho3 = 0.0;
  std::optional<Rho3Result> rho3_detail;
  std::optional<Rho0Result> rho0;
  ThetaInterval theta_iv;
  Threshold threshold;
  double theta = 1.0;
  double gamma_theta = 0.0;
  std::vector<double> x0;
  double x0_H2 = 0.0;
  double x_moment = 0.0;
  CaseFlags flags;
  std::vector<double> betas;
  ConditionCheck condition_P;
  std::optional<ConditionTResult> condition_T;
  std::optional<MonotoneCheck> monotone;
  std::vector<std::string> requests;
  std::vector<std::string> warnings;

  Meta meta() const { return {hash, kToolVersion, cfg.sim.seed}; }

  BoundInputs inputs(double th, double beta) const {
    BoundInputs in;
    in.r = r;
    in.theta = th;
    in.rho1 = rho1;
    in.rho2 = rho2;
    in.rho3 = rho3;
    in.lambda1 = op->lambda1;
    in.gamma_theta = gamma(th, r, *op);
    in.x_moment = std::pow(x0_H2, th * (1.0 - r) / 2.0);
    in.beta = beta;
    return in;
  }

  SimConfig sim() const {
    if (!op->has_box()) throw ConfigError("config: simulation needs a box operator (operator.side_lengths / modes)");
    if (noise.kind == NoiseKind::mixed) throw ConfigError("config: mixed noise is supported for bounds only");
    SimConfig s;
    s.op = op;
    s.grid_size = cfg.sim.grid_size;
    s.graph = graph;
    s.noise = noise;
    s.x0 = x0;
    s.h = cfg.sim.h;
    s.T_max = cfg.sim.T_max;
    s.eps_ext = cfg.sim.eps_ext;
    s.delta_yosida = cfg.sim.delta_yosida;
    s.M_traj = cfg.sim.M_traj;
    s.seed = cfg.sim.seed;
    s.scheme = cfg.sim.scheme == "explicit_yosida" ? Scheme::explicit_yosida : Scheme::semi_implicit_resolvent;
    s.solver_tol = cfg.sim.solver_tol;
    s.solver_max_iter = cfg.sim.solver_max_iter;
    s.checkpoints = cfg.sim.checkpoints;
    s.record_steps = cfg.sim.record_steps;
    s.betas = betas;
    return s;
  }

  bool has_request(const std::string& r) const {
    return std::find(requests.begin(), requests.end(), r) != requests.end();
  }
};

namespace detail {

inline double need(const std::optional<double>& v, const char* key) {
  if (!v) throw ConfigError(std::string("config: graph.") + key + " is required for this graph kind");
  return *v;
}

inline PsiGraph build_graph(const GraphBlock& g) {
  PsiGraph out;
  try {
    if (g.kind == "soc") out = PsiGraph::soc(g.theta1.value_or(1.0), g.theta2.value_or(0.0), g.odd_extend);
    else if (g.kind == "fast_diffusion") out = PsiGraph::fast_diffusion(need(g.r, "r"));
    else if (g.kind == "power_plus_linear")
      out = PsiGraph::power_plus_linear(need(g.theta1, "theta1"), need(g.r, "r"), need(g.theta2, "theta2"));
    else out = PsiGraph::linear(need(g.theta2, "theta2"));
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: graph: ") + e.what());
  }
  if (g.C) out.C = *g.C;
  if (g.q) out.q = *g.q;
  if (g.kappa) out.kappa = *g.kappa;
  return out;
}

inline NoiseSpec build_noise(const NoiseBlock& n) {
  MuRule mu = n.mu_rule == "powerlaw" ? MuRule::powerlaw(n.a, n.p) : MuRule::list(n.mu, n.open_tail);
  try {
    if (n.kind == "none") return NoiseSpec::none();
    if (n.kind == "diagonal") return NoiseSpec::diagonal(mu);
    if (n.kind == "uncoloured") return NoiseSpec::uncoloured(n.sigma);
    if (n.kind == "rank_one") return NoiseSpec::rank_one(n.c, n.direction.empty() ? std::vector<double>{1.0} : n.direction);
    if (n.kind == "finite_mode") return NoiseSpec::finite_mode(n.mu);
    return NoiseSpec::mixed(n.c, n.c_tilde);
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: noise: ") + e.what());
  }
}

inline std::vector<std::string> auto_requests(const Derived& d) {
  std::vector<std::string> req;
  if (d.rho1 <= 0.0 || !std::isfinite(d.gamma_theta)) return req;
  const bool uncoloured = d.noise.kind == NoiseKind::uncoloured;
  if (d.flags.case1) req.push_back("case1");
  if (d.flags.case2 || (!d.betas.empty() && d.flags.beta_max > 0.0 && !uncoloured)) req.push_back("case2");
  if (d.flags.case3) req.push_back("case3");
  if (d.noise.kind == NoiseKind::rank_one || d.noise.kind == NoiseKind::finite_mode || d.noise.kind == NoiseKind::mixed) {
    const auto env = qv_envelope(d.noise);
    if (env.c1 > 0.0) req.push_back("envelope");
  }
  if (d.graph.kind == PsiKind::soc && d.graph.theta1 > 0.0 && d.graph.theta2 > 0.0 && d.noise.is_zero())
    req.push_back("zhang");
  if (uncoloured && d.rho0 && d.rho0->finite && d.rho0->value > 0.0 && d.graph.kappa >= d.rho0->value &&
      d.rho2 > 0.0)
    req.push_back("uncoloured");
  return req;
}

// Throws CaseError when an explicitly requested bound cannot be formed.
inline void check_request(const Derived& d, const std::string& req) {
  if (d.rho1 <= 0.0) throw CaseError("bounds." + req + ": the graph has no power-type coercivity (rho1 = 0)");
  if (!std::isfinite(d.gamma_theta))
    throw CaseError("bounds." + req + ": gamma(theta) is infinite at theta = " + g17(d.theta));
  if (req == "case1" && !d.flags.case1) throw CaseError("bounds.case1: " + d.flags.case1_reason);
  if (req == "case2") {
    if (!(d.rho3 < d.op->lambda1 * d.rho2))
      throw CaseError("bounds.case2: needs rho3 < lambda1 rho2 (rho2 = " + g17(d.rho2) + ", rho3 = " + g17(d.rho3) + ")");
    for (double b : d.betas)
      if (!(b > 0.0 && b < d.flags.beta_max))
        throw CaseError("bounds.case2: beta = " + g17(b) + " outside (0, " + g17(d.flags.beta_max) + ")");
  }
  if (req == "case3" && !d.flags.case3) {
    const auto th = fast_diffusion_threshold(d.op->n > 0 ? d.op->n : 1, d.op->alpha);
    throw CaseError("bounds.case3: " + d.flags.case3_reason + " (r* = " + g17(th.r_star) + ")");
  }
  if (req == "envelope") {
    if (d.noise.kind != NoiseKind::rank_one && d.noise.kind != NoiseKind::finite_mode && d.noise.kind != NoiseKind::mixed)
      throw CaseError("bounds.envelope: needs rank_one, finite_mode or mixed noise");
    if (!(qv_envelope(d.noise).c1 > 0.0)) throw CaseError("bounds.envelope: lower envelope degenerate (c1 = 0)");
  }
  if (req == "zhang") {
    if (d.graph.kind != PsiKind::soc || !(d.graph.theta1 > 0.0 && d.graph.theta2 > 0.0))
      throw CaseError("bounds.zhang: needs the SOC graph with theta1, theta2 > 0");
    if (!d.noise.is_zero()) throw CaseError("bounds.zhang: deterministic bound needs zero noise");
  }
  if (req == "uncoloured") {
    if (d.noise.kind != NoiseKind::uncoloured) throw CaseError("bounds.uncoloured: needs uncoloured noise");
    if (!d.rho0 || !d.rho0->finite) throw CaseError("bounds.uncoloured: rho0 is infinite on this operator");
    if (!(d.rho0->value > 0.0 && d.rho0->value <= d.graph.kappa && d.rho0->value < d.graph.theta2))
      throw CaseError("bounds.uncoloured: needs rho0 in (0, kappa] and rho0 < theta2 (rho0 = " + g17(d.rho0->value) +
                      ")");
  }
}

}  // namespace detail

/// Validates a config against the derived constants and computes them.
inline Derived derive(const RunConfig& cfg) {
  Derived d;
  d.cfg = cfg;
  d.hash = config_hash(cfg);
  try {
    if (!cfg.op.eigenvalues.empty())
      d.op = std::make_shared<OperatorSpec>(
          operator_from_table(cfg.op.eigenvalues, *cfg.op.d_eff, cfg.op.c_inf.value_or(kDefaultCInf)));
    else
      d.op = std::make_shared<OperatorSpec>(
          build_operator(cfg.op.n, cfg.op.alpha, cfg.op.side_lengths, cfg.op.modes, cfg.op.c_inf));
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: operator: ") + e.what());
  }
  d.graph = detail::build_graph(cfg.graph);
  d.noise = detail::build_noise(cfg.noise);
  d.r = d.graph.r;
  d.rho1 = d.graph.kind == PsiKind::linear ? 0.0 : d.graph.theta1;
  d.rho2 = d.graph.theta2;
  if (d.op->has_box()) d.threshold = fast_diffusion_threshold(d.op->n, d.op->alpha);

  // growth/coercivity with the constants claimed for the graph
  d.condition_P = check_condition_P(d.graph, d.graph.C, d.graph.q, d.graph.kind == PsiKind::linear ? 0.0 : d.graph.theta1,
                                    d.graph.theta2, d.r, default_sample_grid());
  if (!d.condition_P.pass)
    throw ConfigError("config: graph: growth/coercivity condition fails at s = " + g17(d.condition_P.worst_at) +
                      " with C = " + g17(d.graph.C) + ", q = " + g17(d.graph.q));
  if (!d.graph.multivalued() && d.graph.kappa > 0.0) {
    d.monotone = check_strong_monotone(d.graph, d.graph.kappa, default_sample_pairs());
    if (!d.monotone->pass)
      throw ConfigError("config: graph.kappa = " + g17(d.graph.kappa) + " exceeds the monotonicity modulus");
  }

  if (d.noise.kind == NoiseKind::finite_mode && d.noise.mu.values.size() > d.op->size())
    throw ConfigError("config: noise.mu has more entries than modes");
  if (d.noise.kind == NoiseKind::uncoloured) {
    std::optional<std::vector<double>> sup;
    if (!cfg.op.sup_norm_sq.empty()) sup = cfg.op.sup_norm_sq;
    try {
      d.rho0 = rho0_uncoloured(*d.op, std::abs(d.noise.sigma), sup);
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("config: noise: ") + e.what());
    }
    d.rho2 = d.graph.theta2 - d.rho0->value;
    if (!d.rho0->finite) d.warnings.push_back("rho0 is infinite on this operator: " + d.rho0->note);
    if (d.rho0->tail_unknown) d.warnings.push_back("rho0: " + d.rho0->note);
  } else {
    if (d.noise.kind == NoiseKind::diagonal && !d.op->has_box())
      throw ConfigError("config: diagonal noise needs a box operator");
    auto res = rho3(d.noise, d.op, cfg.sim.grid_size, cfg.noise.epsilon);
    d.rho3 = res.value;
    for (const auto& w : res.warnings) d.warnings.push_back("rho3: " + w);
    d.rho3_detail = std::move(res);
    if (d.noise.kind == NoiseKind::diagonal) {
      try {
        const double eps = cfg.noise.epsilon.value_or(0.5);
        auto t = check_condition_T(d.noise.mu, *d.op, eps);
        if (!cfg.noise.epsilon && t.supremal_epsilon)
          t = check_condition_T(d.noise.mu, *d.op, std::min(1.0, 0.5 * *t.supremal_epsilon));
        d.condition_T = t;
      } catch (const UndecidableError& e) {
        d.warnings.push_back(std::string("condition T: ") + e.what());
      }
    }
  }

  d.theta_iv = admissible_thetas(d.r, d.op->d_eff);
  if (cfg.bounds.theta) {
    if (!d.theta_iv.contains(*cfg.bounds.theta))
      throw ConfigError("config: bounds.theta = " + g17(*cfg.bounds.theta) + " outside the admissible interval (0, " +
                        g17(d.theta_iv.hi) + (d.theta_iv.closed ? "]" : ")"));
    d.theta = *cfg.bounds.theta;
  } else {
    d.theta = d.theta_iv.contains(1.0) ? 1.0 : 0.5 * d.theta_iv.hi;
  }
  d.gamma_theta = gamma(d.theta, d.r, *d.op);

  const std::size_t N = d.op->size();
  if (cfg.sim.x0 == "e1") {
    d.x0 = preset_scaled_e1(*d.op, cfg.sim.x0_scale);
  } else if (cfg.sim.x0 == "bump") {
    if (!d.op->has_box()) throw ConfigError("config: sim.x0 = bump needs a box operator");
    d.x0 = preset_bump(*d.op, cfg.sim.x0_scale,
                       cfg.sim.grid_size > 0 ? cfg.sim.grid_size : default_grid_size(*d.op));
  } else {
    if (cfg.sim.x0_coeffs.size() > N) throw ConfigError("config: sim.x0_coeffs has more entries than modes");
    d.x0 = cfg.sim.x0_coeffs;
    d.x0.resize(N, 0.0);
    for (auto& v : d.x0) v *= cfg.sim.x0_scale;
  }
  d.x0_H2 = h_norm_sq(d.x0, d.op->lambda);
  if (!(d.x0_H2 > 0.0)) throw ConfigError("config: sim.x0 is zero");
  d.x_moment = std::pow(d.x0_H2, d.theta * (1.0 - d.r) / 2.0);

  d.flags = case_flags(d.inputs(d.theta, 0.0));
  if (!cfg.bounds.betas.empty()) d.betas = cfg.bounds.betas;
  else if (d.flags.beta_max > 0.0) d.betas = {cfg.bounds.beta_fraction * d.flags.beta_max};
  d.flags = case_flags(d.inputs(d.theta, d.betas.empty() ? 0.0 : d.betas.front()));

  if (cfg.bounds.request.empty()) {
    d.requests = detail::auto_requests(d);
  } else {
    for (const auto& req : cfg.bounds.request) detail::check_request(d, req);
    d.requests = cfg.bounds.request;
  }
  return d;
}

inline Derived derive_file(const std::string& path, std::optional<std::uint64_t> seed = std::nullopt,
                           std::optional<std::string> out_dir = std::nullopt) {
  RunConfig cfg = parse_config_file(path);
  if (seed) cfg.sim.seed = *seed;
  if (out_dir) cfg.output.dir = *out_dir;
  return derive(cfg);
}

// ---------------------------------------------------------------------------
// bounds

struct BoundReport {
  Json json;
  CsvTable theta_table{{"theta", "gamma", "case1_raw", "case1_clamped", "case2", "case3", "zhang"}};
  CsvTable beta_table{{"beta", "case2", "alpha_beta", "uncoloured"}};
};

inline Json derived_json(const Derived& d) {
  Json j;
  j["operator"] = {{"n", d.op->n},
                   {"alpha", num(d.op->alpha)},
                   {"modes", d.op->size()},
                   {"lambda1", num(d.op->lambda1)},
                   {"d_eff", num(d.op->d_eff)},
                   {"c_inf", num(d.op->c_inf)}};
  j["graph"] = {{"kind", to_string(d.graph.kind)},
                {"theta1", num(d.graph.theta1)},
                {"theta2", num(d.graph.theta2)},
                {"r", num(d.r)},
                {"C", num(d.graph.C)},
                {"q", num(d.graph.q)},
                {"kappa", num(d.graph.kappa)}};
  j["noise"] = {{"kind", to_string(d.noise.kind)}};
  j["rho1"] = num(d.rho1);
  j["rho2"] = num(d.rho2);
  j["rho3"] = num(d.rho3);
  if (d.rho3_detail) {
    j["rho3_detail"] = {{"applicable", d.rho3_detail->applicable},
                        {"converged", d.rho3_detail->converged},
                        {"iterations", d.rho3_detail->iterations},
                        {"half_truncation_value", num(d.rho3_detail->half_truncation_value)}};
  }
  if (d.rho0) j["rho0"] = {{"value", num(d.rho0->value)}, {"finite", d.rho0->finite}, {"note", d.rho0->note}};
  j["condition_P"] = {{"pass", d.condition_P.pass}, {"worst_slack", num(d.condition_P.worst_slack)},
                      {"odd_extended", d.condition_P.odd_extended_for_check}};
  if (d.condition_T)
    j["condition_T"] = {{"pass", d.condition_T->pass},
                        {"exponent", num(d.condition_T->exponent)},
                        {"partial_sum", num(d.condition_T->partial_sum)},
                        {"supremal_epsilon", num(d.condition_T->supremal_epsilon)}};
  if (d.monotone) j["strong_monotone"] = {{"pass", d.monotone->pass}, {"worst_ratio", num(d.monotone->worst_ratio)}};
  j["theta"] = num(d.theta);
  j["theta_interval"] = {{"hi", num(d.theta_iv.hi)}, {"closed", d.theta_iv.closed}};
  j["threshold_r_star"] = num(d.threshold.r_star);
  j["gamma_theta"] = num(d.gamma_theta);
  j["x0_H2"] = num(d.x0_H2);
  j["x_moment"] = num(d.x_moment);
  j["case_flags"] = {{"case1", d.flags.case1}, {"case2", d.flags.case2}, {"case3", d.flags.case3},
                     {"beta_max", num(d.flags.beta_max)}};
  Json betas = Json::array();
  for (double b : d.betas) betas.push_back(num(b));
  j["betas"] = betas;
  j["requests"] = d.requests;
  j["warnings"] = d.warnings;
  return j;
}

namespace detail {

inline double zhang_f(const Derived& d, double th) {
  const double xh = std::sqrt(d.x0_H2);
  return std::sqrt(gamma(th, 0.0, *d.op)) * std::pow(xh, th) /
         (th * std::pow(d.graph.theta1, th) * std::pow(d.graph.theta2, 1.0 - th) *
          std::pow(d.op->lambda1, (1.0 - th) / 2.0));
}

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace detail

inline BoundReport compute_bounds(const Derived& d) {
  BoundReport rep;
  Json& j = rep.json;
  j["meta"] = meta_json(d.meta());
  j["derived"] = derived_json(d);
  Json b = Json::object();
  const double beta0 = d.betas.empty() ? 0.0 : d.betas.front();

  if (d.has_request("case1")) {
    const auto p = thm21_case1(d.inputs(d.theta, beta0));
    b["case1"] = {{"raw", num(p.raw)}, {"clamped", num(p.clamped)}, {"interpretation", p.interpretation},
                  {"theta", num(d.theta)}};
  }
  if (d.has_request("case2")) {
    Json rows = Json::array();
    for (double beta : d.betas) {
      const auto m = thm21_case2(d.inputs(d.theta, beta));
      rows.push_back({{"beta", num(beta)}, {"value", num(m.value)}, {"alpha_beta", num(m.alpha_beta)}});
    }
    b["case2"] = {{"theta", num(d.theta)}, {"beta_range", {0.0, num(d.flags.beta_max)}}, {"rows", rows}};
  }
  if (d.has_request("case3")) b["case3"] = {{"value", num(thm21_case3(d.inputs(1.0, 0.0)))}, {"theta", 1.0}};
  if (d.has_request("envelope")) {
    const auto env = qv_envelope(d.noise);
    Thm22Inputs in;
    in.x_H2 = d.x0_H2;
    in.rho1 = d.rho1;
    in.rho2 = d.rho2;
    in.rho3 = d.rho3;
    in.theta = d.theta;
    in.r = d.r;
    in.lambda1 = d.op->lambda1;
    in.gamma_theta = d.gamma_theta;
    in.c1 = env.c1;
    in.c2 = env.c2;
    const auto res = thm22_ratio(in);
    b["envelope"] = {{"ratio", num(res.ratio)}, {"f_infinite", res.f_infinite}, {"s_star", num(res.s_star)},
                     {"tail_exponent", num(res.tail_exponent)}, {"c1", num(env.c1)}, {"c2", num(env.c2)},
                     {"theta", num(d.theta)}};
  }
  if (d.has_request("zhang")) {
    const auto z = zhang_deterministic_bound(std::sqrt(d.x0_H2), d.graph.theta1, d.graph.theta2, *d.op);
    b["zhang"] = {{"value", num(z.value)}, {"argmin", num(z.argmin)}, {"curvature", num(z.curvature)}};
  }
  std::vector<TttBound> ttt;
  if (d.has_request("uncoloured")) {
    Json rows = Json::array();
    for (double beta : d.betas) {
      TttInputs in;
      in.r = d.r;
      in.theta = d.theta;
      in.theta1 = d.graph.theta1;
      in.theta2 = d.graph.theta2;
      in.rho0 = d.rho0->value;
      in.kappa = d.graph.kappa;
      in.lambda1 = d.op->lambda1;
      in.gamma_theta = d.gamma_theta;
      in.x_moment = d.x_moment;
      in.beta = beta;
      ttt.push_back(thm_ttt_bound(in));
      rows.push_back({{"beta", num(beta)}, {"value", num(ttt.back().value)}, {"via_case2", num(ttt.back().via_case2)}});
    }
    b["uncoloured"] = {{"theta", num(d.theta)}, {"beta_range", {0.0, num(ttt.empty() ? 0.0 : ttt.front().beta_max)}},
                       {"rows", rows}};
  }
  j["bounds"] = b;

  // per-theta table over the admissible grid
  Json table = Json::array();
  double inf1 = detail::nan(), inf2 = detail::nan();
  for (double th : theta_grid(d.theta_iv, d.cfg.bounds.theta_grid)) {
    const auto in = d.inputs(th, beta0);
    const auto f = case_flags(in);
    double c1raw = detail::nan(), c1 = detail::nan(), c2 = detail::nan(), c3 = detail::nan(), z = detail::nan();
    if (d.rho1 > 0.0 && f.case1) {
      const auto p = thm21_case1(in);
      c1raw = p.raw;
      c1 = p.clamped;
      if (!(inf1 <= c1raw)) inf1 = c1raw;
    }
    if (d.rho1 > 0.0 && f.case2) {
      c2 = thm21_case2(in).value;
      if (!(inf2 <= c2)) inf2 = c2;
    }
    if (d.rho1 > 0.0 && f.case3) c3 = thm21_case3(in);
    if (d.has_request("zhang")) z = detail::zhang_f(d, th);
    rep.theta_table.add({g17(th), g17(in.gamma_theta), g17(c1raw), g17(c1), g17(c2), g17(c3), g17(z)});
    table.push_back({{"theta", num(th)}, {"gamma", num(in.gamma_theta)}, {"case1_raw", num(c1raw)},
                     {"case2", num(c2)}, {"case3", num(c3)}, {"zhang", num(z)}});
  }
  j["theta_table"] = table;
  j["theta_table_infimum"] = {{"case1_raw", num(inf1)}, {"case2", num(inf2)}};

  for (std::size_t i = 0; i < d.betas.size(); ++i) {
    const double beta = d.betas[i];
    double c2 = detail::nan(), ab = detail::nan(), u = detail::nan();
    if (d.has_request("case2")) {
      const auto m = thm21_case2(d.inputs(d.theta, beta));
      c2 = m.value;
      ab = m.alpha_beta;
    }
    if (i < ttt.size()) u = ttt[i].value;
    rep.beta_table.add({g17(beta), g17(c2), g17(ab), g17(u)});
  }
  return rep;
}

inline std::string bounds_summary(const BoundReport& rep) {
  std::ostringstream os;
  const auto& d = rep.json["derived"];
  os << "lambda1 = " << g17(read_num(d["operator"]["lambda1"])) << ", d = " << g17(read_num(d["operator"]["d_eff"]))
     << ", theta = " << g17(read_num(d["theta"])) << ", gamma(theta) = " << g17(read_num(d["gamma_theta"])) << "\n";
  os << "rho1 = " << g17(read_num(d["rho1"])) << ", rho2 = " << g17(read_num(d["rho2"]))
     << ", rho3 = " << g17(read_num(d["rho3"])) << "\n";
  const auto& b = rep.json["bounds"];
  if (b.contains("case1"))
    os << "P(tau0 = inf) <= " << g17(read_num(b["case1"]["clamped"])) << " (raw " << g17(read_num(b["case1"]["raw"]))
       << ")\n";
  if (b.contains("case2"))
    for (const auto& row : b["case2"]["rows"])
      os << "E exp(" << g17(read_num(row["beta"])) << " tau0) <= " << g17(read_num(row["value"])) << "\n";
  if (b.contains("case3")) os << "E tau0 <= " << g17(read_num(b["case3"]["value"])) << "\n";
  if (b.contains("envelope")) os << "P(tau0 = inf) <= " << g17(read_num(b["envelope"]["ratio"])) << " (envelope)\n";
  if (b.contains("zhang"))
    os << "tau0 <= " << g17(read_num(b["zhang"]["value"])) << " (argmin theta " << g17(read_num(b["zhang"]["argmin"]))
       << ")\n";
  if (b.contains("uncoloured"))
    for (const auto& row : b["uncoloured"]["rows"])
      os << "E exp(" << g17(read_num(row["beta"])) << " tau0) <= " << g17(read_num(row["value"])) << " (uncoloured)\n";
  for (const auto& w : d["warnings"]) os << "warning: " << w.get<std::string>() << "\n";
  return os.str();
}

inline std::filesystem::path out_dir(const Derived& d) {
  std::filesystem::path p(d.cfg.output.dir);
  std::filesystem::create_directories(p);
  return p;
}

inline BoundReport cmd_bounds(const Derived& d) {
  auto rep = compute_bounds(d);
  const auto dir = out_dir(d);
  write_file(dir / "bounds.json", dump_json(rep.json));
  write_file(dir / "bounds.csv", rep.theta_table.str(d.meta()));
  write_file(dir / "bounds_beta.csv", rep.beta_table.str(d.meta()));
  return rep;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulationReport {
  Json json;
  CsvTable trajectories{{"index", "extinct", "failed", "hitting_time", "hitting_time_fine", "crossing_step", "retries",
                         "solver_iterations", "max_solver_residual", "positivity_violations", "ito_max_abs",
                         "ito_rms"}};
  CsvTable curves{{"t", "H2", "H2_se", "L2", "L2_se", "Lp", "Lp_se"}};
  EnsembleStats stats;
};

inline Json mean_se_json(const MeanSe& m) {
  return {{"mean", num(m.mean)}, {"se", num(m.se)}, {"count", m.count}};
}

/// Supermartingale compensator: rho3 for the drift-compensated noises, none
/// for uncoloured or mixed noise.
inline std::optional<double> compensation_rate(const Derived& d) {
  if (d.noise.kind == NoiseKind::uncoloured || d.noise.kind == NoiseKind::mixed) return std::nullopt;
  return d.rho3;
}

inline SimulationReport run_simulation(const Derived& d, int threads) {
  SimulationReport rep;
  const SimConfig sc = d.sim();
  rep.stats = run_ensemble(sc, threads, true);
  const auto& s = rep.stats;
  Json& j = rep.json;
  j["meta"] = meta_json(d.meta());
  j["settings"] = {{"h", num(sc.h)},
                   {"T_max", num(sc.T_max)},
                   {"eps_ext", num(sc.effective_eps())},
                   {"grid_size", sc.effective_grid()},
                   {"modes", d.op->size()},
                   {"M_traj", sc.M_traj},
                   {"scheme", to_string(sc.scheme)},
                   {"solver_tol", num(sc.solver_tol)}};
  j["M"] = s.M;
  j["failed"] = s.failed;
  j["extinct"] = s.extinct;
  j["extinction_fraction"] = num(s.extinction_fraction);
  j["wilson"] = {{"lo", num(s.wilson.lo)}, {"hi", num(s.wilson.hi)}};
  j["all_extinct"] = s.all_extinct;
  j["tau_extinct"] = mean_se_json(s.tau_extinct);
  j["tau_censored"] = mean_se_json(s.tau_censored);
  Json bm = Json::array();
  for (const auto& m : s.beta_moments) bm.push_back({{"beta", num(m.beta)}, {"estimate", mean_se_json(m.estimate)}});
  j["beta_moments"] = bm;
  j["threshold"] = {{"max_shift", num(s.max_threshold_shift)},
                    {"max_crossing_step", num(s.max_crossing_step)},
                    {"insensitive", s.threshold_insensitive}};
  j["diagnostics"] = {{"retries", s.total_retries},
                      {"max_solver_residual", num(s.max_solver_residual)},
                      {"max_dissipativity_excess", num(s.max_dissipativity_excess)},
                      {"positivity_violations", s.positivity_violations},
                      {"min_positivity_ratio", num(s.min_positivity_ratio)}};
  if (const auto rate = compensation_rate(d)) {
    const auto sm = supermartingale_check(s, *rate);
    j["supermartingale"] = {{"pass", sm.pass},
                            {"rho3", num(*rate)},
                            {"max_uptick_se", num(sm.max_uptick)},
                            {"max_uptick_abs", num(sm.max_uptick_abs)},
                            {"worst_times", {num(sm.worst_times.first), num(sm.worst_times.second)}}};
  }
  for (const auto& tr : s.trajectories) {
    std::string ito_max = "nan", ito_rms = "nan";
    if (sc.record_steps && !tr.failed) {
      const auto ir = ito_residual(tr);
      ito_max = g17(ir.max_abs);
      ito_rms = g17(ir.rms);
    }
    rep.trajectories.add({std::to_string(tr.index), tr.extinct ? "1" : "0", tr.failed ? "1" : "0", g17(tr.hitting_time),
                          g17(tr.hitting_time_fine.value_or(detail::nan())), g17(tr.crossing_step),
                          std::to_string(tr.retries), std::to_string(tr.solver_iterations),
                          g17(tr.max_solver_residual), std::to_string(tr.positivity_violations), ito_max, ito_rms});
  }
  for (std::size_t k = 0; k < s.curve_t.size(); ++k)
    rep.curves.add({g17(s.curve_t[k]), g17(s.mean_H2[k].mean), g17(s.mean_H2[k].se), g17(s.mean_L2[k].mean),
                    g17(s.mean_L2[k].se), g17(s.mean_Lp[k].mean), g17(s.mean_Lp[k].se)});
  return rep;
}

inline std::string simulation_summary(const SimulationReport& rep) {
  std::ostringstream os;
  const auto& j = rep.json;
  os << "extinct " << j["extinct"].get<long>() << " of " << j["M"].get<long>() << " (failed "
     << j["failed"].get<long>() << "), Wilson [" << g17(read_num(j["wilson"]["lo"])) << ", "
     << g17(read_num(j["wilson"]["hi"])) << "]\n";
  os << "mean tau (extinct) = " << g17(read_num(j["tau_extinct"]["mean"])) << " +- "
     << g17(read_num(j["tau_extinct"]["se"])) << "\n";
  for (const auto& m : j["beta_moments"])
    os << "E exp(" << g17(read_num(m["beta"])) << " tau ^ T) = " << g17(read_num(m["estimate"]["mean"])) << " +- "
       << g17(read_num(m["estimate"]["se"])) << "\n";
  if (j.contains("supermartingale"))
    os << "supermartingale check: " << (j["supermartingale"]["pass"].get<bool>() ? "pass" : "fail") << "\n";
  return os.str();
}

inline SimulationReport cmd_simulate(const Derived& d, int threads) {
  auto rep = run_simulation(d, threads);
  const auto dir = out_dir(d);
  write_file(dir / "stats.json", dump_json(rep.json));
  write_file(dir / "trajectories.csv", rep.trajectories.str(d.meta()));
  write_file(dir / "curves.csv", rep.curves.str(d.meta()));
  return rep;
}

// ---------------------------------------------------------------------------
// verify

enum class Verdict { consistent, violated, vacuous };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::consistent: return "consistent";
    case Verdict::violated: return "violated";
    case Verdict::vacuous: return "vacuous";
  }
  return "unknown";
}

struct ComparisonRow {
  std::string name;
  double bound = 0.0;
  double empirical = 0.0;
  double se = 0.0;
  Verdict verdict = Verdict::consistent;
  std::string note;
};

/// An upper bound is violated only when the estimate exceeds it by more than 3 SE.
inline Verdict judge_upper(double bound, double empirical, double se, bool vacuous = false) {
  if (vacuous) return Verdict::vacuous;
  return empirical - 3.0 * se > bound ? Verdict::violated : Verdict::consistent;
}

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  Json json;
  CsvTable csv{{"name", "bound", "empirical", "se", "verdict", "note"}};
  bool any_violated() const {
    return std::any_of(rows.begin(), rows.end(), [](const ComparisonRow& r) { return r.verdict == Verdict::violated; });
  }
};

inline Json load_checked(const std::filesystem::path& path, const Derived& d) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("verify: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("meta") || !j["meta"].contains("config_hash"))
    throw ConfigError("verify: '" + path.string() + "' has no config hash; refusing");
  const auto h = j["meta"]["config_hash"].get<std::string>();
  if (h != d.hash)
    throw ConfigError("verify: '" + path.string() + "' was produced from a different config (hash " + h +
                      ", expected " + d.hash + "); refusing");
  if (j["meta"].value("tool_version", std::string()) != kToolVersion)
    throw ConfigError("verify: '" + path.string() + "' was produced by another tool version; refusing");
  return j;
}

inline ComparisonReport compare(const Derived& d, const Json& bounds, const Json& stats) {
  ComparisonReport rep;
  const auto& b = bounds["bounds"];
  const long ok = stats["M"].get<long>() - stats["failed"].get<long>();
  const double frac = read_num(stats["extinction_fraction"]);
  const double surv = 1.0 - frac;
  const double surv_se = ok > 0 ? std::sqrt(surv * (1.0 - surv) / static_cast<double>(ok)) : 0.0;
  const bool all_extinct = stats["all_extinct"].get<bool>();
  auto moment = [&](double beta) -> std::optional<std::pair<double, double>> {
    for (const auto& m : stats["beta_moments"])
      if (read_num(m["beta"]) == beta) return std::pair{read_num(m["estimate"]["mean"]), read_num(m["estimate"]["se"])};
    return std::nullopt;
  };

  if (b.contains("case1")) {
    ComparisonRow r{"case1_survival_probability", read_num(b["case1"]["clamped"]), surv, surv_se, Verdict::consistent, {}};
    r.verdict = judge_upper(r.bound, r.empirical, r.se, read_num(b["case1"]["raw"]) >= 1.0);
    r.note = "survival fraction at T_max over-estimates P(tau0 = inf)";
    rep.rows.push_back(r);
  }
  for (const char* key : {"case2", "uncoloured"}) {
    if (!b.contains(key)) continue;
    for (const auto& row : b[key]["rows"]) {
      const double beta = read_num(row["beta"]);
      const auto m = moment(beta);
      if (!m) continue;
      ComparisonRow r{std::string(key) + "_exp_moment_beta_" + g17(beta), read_num(row["value"]), m->first, m->second, Verdict::consistent, {}};
      r.verdict = judge_upper(r.bound, r.empirical, r.se);
      r.note = "estimate uses tau0 ^ T_max, a lower bound on E exp(beta tau0)";
      rep.rows.push_back(r);
    }
  }
  if (b.contains("case3")) {
    const auto& te = all_extinct ? stats["tau_extinct"] : stats["tau_censored"];
    ComparisonRow r{"case3_expected_time", read_num(b["case3"]["value"]), read_num(te["mean"]), read_num(te["se"]), Verdict::consistent, {}};
    r.verdict = judge_upper(r.bound, r.empirical, r.se);
    r.note = all_extinct ? "all trajectories extinct" : "censored mean: lower bound on E tau0 only";
    rep.rows.push_back(r);
  }
  if (b.contains("zhang")) {
    const auto& te = all_extinct ? stats["tau_extinct"] : stats["tau_censored"];
    ComparisonRow r{"zhang_extinction_time", read_num(b["zhang"]["value"]), read_num(te["mean"]), read_num(te["se"]), Verdict::consistent, {}};
    r.verdict = judge_upper(r.bound, r.empirical, r.se);
    r.note = all_extinct ? "all trajectories extinct" : "censored mean: lower bound on tau0 only";
    rep.rows.push_back(r);
  }
  if (b.contains("envelope")) {
    const double ratio = read_num(b["envelope"]["ratio"]);
    ComparisonRow r{"envelope_survival_probability", ratio, surv, surv_se, Verdict::consistent, {}};
    r.verdict = judge_upper(r.bound, r.empirical, r.se, ratio >= 1.0);
    r.note = b["envelope"]["f_infinite"].get<bool>() ? "F(inf) = inf: extinction almost surely"
                                                     : "survival fraction at T_max over-estimates P(tau0 = inf)";
    rep.rows.push_back(r);
  }
  if (stats.contains("supermartingale")) {
    const auto& sm = stats["supermartingale"];
    ComparisonRow r{"supermartingale", 3.0, read_num(sm["max_uptick_se"]), 0.0, Verdict::consistent, {}};
    r.verdict = sm["pass"].get<bool>() ? Verdict::consistent : Verdict::violated;
    r.note = "largest mean increase of exp(-2 rho3 t)||X||_H^2 in SE units";
    rep.rows.push_back(r);
  }

  rep.json["meta"] = meta_json(d.meta());
  Json rows = Json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"name", r.name}, {"bound", num(r.bound)}, {"empirical", num(r.empirical)}, {"se", num(r.se)},
                    {"verdict", to_string(r.verdict)}, {"note", r.note}});
    rep.csv.add({r.name, g17(r.bound), g17(r.empirical), g17(r.se), to_string(r.verdict), "\"" + r.note + "\""});
  }
  rep.json["rows"] = rows;
  rep.json["any_violated"] = rep.any_violated();
  return rep;
}

inline ComparisonReport cmd_verify(const Derived& d, int threads) {
  const auto dir = out_dir(d);
  if (!std::filesystem::exists(dir / "bounds.json")) cmd_bounds(d);
  if (!std::filesystem::exists(dir / "stats.json")) cmd_simulate(d, threads);
  const Json bounds = load_checked(dir / "bounds.json", d);
  const Json stats = load_checked(dir / "stats.json", d);
  auto rep = compare(d, bounds, stats);
  write_file(dir / "comparison.json", dump_json(rep.json));
  write_file(dir / "comparison.csv", rep.csv.str(d.meta()));
  return rep;
}

inline std::string comparison_summary(const ComparisonReport& rep) {
  std::ostringstream os;
  for (const auto& r : rep.rows)
    os << r.name << ": bound " << g17(r.bound) << ", empirical " << g17(r.empirical) << " +- " << g17(r.se) << " -> "
       << to_string(r.verdict) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// propcheck

struct PropResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
  std::string note;
};

struct PropcheckReport {
  std::vector<PropResult> results;
  Json json;
  CsvTable csv{{"name", "value", "threshold", "pass", "note"}};
  bool all_pass() const {
    return std::all_of(results.begin(), results.end(), [](const PropResult& r) { return r.pass; });
  }
};

/// Invariant suite evaluated for the configured operator, graph and noise.
inline PropcheckReport run_propcheck(const Derived& d, int threads) {
  PropcheckReport rep;
  std::mt19937_64 rng(splitmix64(d.cfg.sim.seed ^ 0x70726f70ULL));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal;

  {
    long bad = 0;
    for (int i = 0; i < 100000; ++i) {
      const double a = 1e3 * unif(rng);
      const double b = 1e3 * (1.0 - unif(rng));
      const double th = 1.0 - unif(rng);
      if (!lemma24(a, b, th)) ++bad;
    }
    rep.results.push_back({"scalar_inequality_violations", static_cast<double>(bad), 0.0, bad == 0, "100000 triples"});
  }

  if (d.op->has_box()) {
    const auto tr = std::make_shared<SineTransform>(*d.op, default_grid_size(*d.op));
    double worst = std::numeric_limits<double>::infinity();
    for (double th : theta_grid(d.theta_iv, 16)) {
      const double g = gamma(th, d.r, *d.op);
      for (int i = 0; i < 64; ++i) {
        SpectralField x{std::vector<double>(d.op->size()), d.op};
        const double decay = 0.5 + 1.5 * unif(rng);
        for (std::size_t k = 0; k < x.coeffs.size(); ++k)
          x.coeffs[k] = normal(rng) * std::pow(static_cast<double>(k + 1), -decay);
        worst = std::min(worst, lemma23_slack(x, th, d.r, g, *tr) / std::max(1e-300, h_norm(x)));
      }
    }
    rep.results.push_back({"interpolation_min_relative_slack", worst, -1e-12, worst >= -1e-12,
                           "16 admissible theta x 64 random fields"});
  }

  {
    double worst = 0.0;
    for (double th : theta_grid(d.theta_iv, 16)) {
      const double a = gamma(th, d.r, *d.op);
      const double q = gamma_quadrature(th, d.r, *d.op);
      if (std::isfinite(a)) worst = std::max(worst, std::abs(a - q) / a);
    }
    rep.results.push_back({"gamma_quadrature_max_rel_diff", worst, 1e-6, worst <= 1e-6, "closed form vs quadrature"});
  }

  {
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double c = std::pow(10.0, -4.0 + 6.0 * unif(rng));
      const double z = std::pow(10.0, -6.0 + 10.0 * unif(rng)) * (unif(rng) < 0.5 ? -1.0 : 1.0);
      const double v = resolvent(d.graph, c, z);
      const Interval iv = psi_values(d.graph, v);
      const double y = (z - v) / c;
      const double dist = y < iv.lo ? iv.lo - y : (y > iv.hi ? y - iv.hi : 0.0);
      worst = std::max(worst, c * dist / std::max(1.0, std::abs(z)));
    }
    rep.results.push_back({"resolvent_inclusion_residual", worst, 1e-10, worst <= 1e-10, "10000 random (c, z)"});
  }

  rep.results.push_back({"growth_coercivity_worst_slack", d.condition_P.worst_slack, 0.0, d.condition_P.pass,
                         d.condition_P.note});
  if (d.monotone)
    rep.results.push_back({"strong_monotone_worst_ratio", d.monotone->worst_ratio, d.graph.kappa, d.monotone->pass, ""});

  if (d.rho3_detail && d.noise.kind == NoiseKind::diagonal && !d.rho3_detail->witness.empty()) {
    const auto tr = std::make_shared<SineTransform>(*d.op, d.cfg.sim.grid_size > 0 ? d.cfg.sim.grid_size
                                                                                  : default_grid_size(*d.op));
    NoiseModel model(d.noise, d.op, tr, true);
    const auto& w = d.rho3_detail->witness;
    const double achieved = 0.5 * model.hs_norm_sq(w) / h_norm_sq(w, d.op->lambda);
    const double rel = d.rho3 > 0.0 ? std::abs(achieved - d.rho3) / d.rho3 : 0.0;
    rep.results.push_back({"rho3_witness_rel_gap", rel, 1e-6, rel <= 1e-6, "power-iteration maximiser"});
  }

  if (d.op->has_box() && d.noise.kind != NoiseKind::mixed) {
    SimConfig sc = d.sim();
    sc.M_traj = 4;
    sc.T_max = std::min(sc.T_max, 400.0 * sc.h);
    sc.checkpoints = std::min(sc.checkpoints, 16);
    sc.betas.clear();
    sc.record_steps = false;
    try {
      const auto a = run_ensemble(sc, 1);
      const auto b = run_ensemble(sc, std::max(2, threads));
      bool same = a.curves_H2 == b.curves_H2;
      rep.results.push_back({"thread_count_invariance", same ? 0.0 : 1.0, 0.0, same, "4 short trajectories, 1 vs n workers"});
      sc.record_steps = true;
      sc.M_traj = 1;
      const auto c = run_ensemble(sc, 1, true);
      if (!c.trajectories.empty() && !c.trajectories.front().failed) {
        const auto ir = ito_residual(c.trajectories.front());
        const double rel = ir.max_abs / d.x0_H2;
        rep.results.push_back({"ito_residual_max_rel", rel, detail::nan(), true, "informational"});
      }
    } catch (const std::exception& e) {
      rep.results.push_back({"short_ensemble", 1.0, 0.0, false, e.what()});
    }
  }

  rep.json["meta"] = meta_json(d.meta());
  Json rows = Json::array();
  for (const auto& r : rep.results) {
    rows.push_back({{"name", r.name}, {"value", num(r.value)}, {"threshold", num(r.threshold)}, {"pass", r.pass},
                    {"note", r.note}});
    rep.csv.add({r.name, g17(r.value), g17(r.threshold), r.pass ? "1" : "0", "\"" + r.note + "\""});
  }
  rep.json["results"] = rows;
  rep.json["all_pass"] = rep.all_pass();
  return rep;
}

inline PropcheckReport cmd_propcheck(const Derived& d, int threads) {
  auto rep = run_propcheck(d, threads);
  const auto dir = out_dir(d);
  write_file(dir / "propcheck.json", dump_json(rep.json));
  write_file(dir / "propcheck.csv", rep.csv.str(d.meta()));
  return rep;
}

}  // namespace extinction
