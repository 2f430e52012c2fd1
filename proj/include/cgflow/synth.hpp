#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cgflow/dag.hpp"
#include "cgflow/dataset.hpp"
#include "cgflow/effects.hpp"
#include "cgflow/errors.hpp"
#include "cgflow/expr.hpp"
#include "cgflow/rng.hpp"

namespace cgflow {

// Exogenous noise distribution attached to one SCM node.
struct NoiseDist {
  enum class Kind { Normal, Uniform, Bernoulli, DiscreteUniform };
  Kind kind = Kind::Normal;
  double a = 0.0, b = 1.0;  // (mean, sd) | (lo, hi) | (p, -) | (levels, -)

  double sample(Rng& rng) const {
    switch (kind) {
      case Kind::Normal: return rng.normal(a, b);
      case Kind::Uniform: return rng.uniform(a, b);
      case Kind::Bernoulli: return rng.bernoulli(a) ? 1.0 : 0.0;
      case Kind::DiscreteUniform: return static_cast<double>(rng.index(static_cast<std::size_t>(a)));
    }
    return 0.0;
  }

  bool finite_support() const {
    return kind == Kind::Bernoulli || kind == Kind::DiscreteUniform;
  }

  std::vector<std::pair<double, double>> support() const {
    if (kind == Kind::Bernoulli) return {{0.0, 1.0 - a}, {1.0, a}};
    if (kind == Kind::DiscreteUniform) {
      std::vector<std::pair<double, double>> s;
      const auto k = static_cast<std::size_t>(a);
      for (std::size_t v = 0; v < k; ++v) s.emplace_back(static_cast<double>(v), 1.0 / k);
      return s;
    }
    throw UnsupportedMechanism("noise distribution has infinite support");
  }
};

// One assignment X := f(parents, u), optionally discretized afterwards.
struct ScmNode {
  std::string name;
  bool discrete = false;
  std::size_t cardinality = 0;
  NodeRole role = NodeRole::Plain;
  bool group_key = false;
  NoiseDist noise;
  Expr::Ptr mech;
  std::vector<std::string> parents;  // in declaration order
};

// Ground-truth structural causal model: closed-form mechanisms over a DAG
// plus per-node noise. Sampling is ancestral (declaration order), with
// discretization applied last.
class SyntheticScm {
 public:
  // Line format, one node per line ('#' starts a comment):
  //   NAME [discrete(N)] [role=ROLE] [group] ~ DIST(args) : EXPRESSION
  // DIST is normal(mean, sd), uniform(lo, hi), bernoulli(p) or
  // discrete_uniform(k); the expression sees earlier nodes and `u`, the
  // node's own noise.
  static SyntheticScm parse(const std::string& text) {
    SyntheticScm scm;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      scm.add_node(parse_line(line, scm));
    }
    if (scm.nodes_.empty()) throw ScmParseError("SCM has no nodes");
    scm.finalize();
    return scm;
  }

  const std::vector<ScmNode>& nodes() const { return nodes_; }
  const CausalDag& dag() const { return dag_; }

  std::size_t index_of(const std::string& name) const { return dag_.index_of(name); }

  std::vector<ColumnSpec> column_specs() const {
    std::vector<ColumnSpec> out;
    for (const auto& n : nodes_) {
      ColumnSpec c;
      c.name = n.name;
      c.discrete = n.discrete;
      c.cardinality = n.cardinality;
      c.role = n.role;
      c.group_key = n.group_key;
      out.push_back(std::move(c));
    }
    return out;
  }

  // Evaluates all mechanisms for one noise vector; `clamp_node` (if any)
  // is forced to `clamp_value` with its mechanism cut out, which is
  // exactly sampling from the mutilated system.
  std::vector<double> propagate(const std::vector<double>& noise,
                                std::optional<std::size_t> clamp_node = std::nullopt,
                                double clamp_value = 0.0) const {
    Expr::Env env;
    std::vector<double> out(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      double v;
      if (clamp_node && *clamp_node == i) {
        v = clamp_value;
      } else {
        env["u"] = noise[i];
        v = nodes_[i].mech->eval(env);
        if (nodes_[i].discrete)
          v = std::min(static_cast<double>(nodes_[i].cardinality - 1),
                       std::max(0.0, std::round(v)));
      }
      out[i] = v;
      env[nodes_[i].name] = v;
    }
    return out;
  }

  Tensor noise_matrix(std::size_t n, std::uint64_t seed) const {
    Rng rng(seed);
    Tensor u(n, nodes_.size());
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < nodes_.size(); ++i) u(r, i) = nodes_[i].noise.sample(rng);
    return u;
  }

  Dataset sample(std::size_t n, std::uint64_t seed) const {
    return materialize(noise_matrix(n, seed), std::nullopt, 0.0);
  }

  Dataset sample_interventional(const std::string& node, double value, std::size_t n,
                                std::uint64_t seed) const {
    return materialize(noise_matrix(n, seed), index_of(node), value);
  }

  // Individual effect for one noise assignment: Y under do(a1) minus Y
  // under do(a0), sharing the noise.
  double ice_of_noise(const std::vector<double>& noise, std::size_t treatment,
                      std::size_t outcome, double a1, double a0) const {
    const auto y1 = propagate(noise, treatment, a1);
    const auto y0 = propagate(noise, treatment, a0);
    return y1[outcome] - y0[outcome];
  }

 private:
  Dataset materialize(const Tensor& u, std::optional<std::size_t> clamp, double value) const {
    Dataset ds;
    ds.columns = column_specs();
    ds.values = Tensor(u.rows(), nodes_.size());
    std::vector<double> noise(nodes_.size());
    for (std::size_t r = 0; r < u.rows(); ++r) {
      for (std::size_t i = 0; i < nodes_.size(); ++i) noise[i] = u(r, i);
      const auto row = propagate(noise, clamp, value);
      for (std::size_t i = 0; i < nodes_.size(); ++i) ds.values(r, i) = row[i];
    }
    const auto g = ds.group_index();
    if (g) {
      ds.group.reserve(ds.rows());
      for (std::size_t r = 0; r < ds.rows(); ++r)
        ds.group.push_back(static_cast<long long>(ds.values(r, *g)));
    }
    return ds;
  }

  static ScmNode parse_line(const std::string& line, const SyntheticScm& so_far) {
    const std::size_t tilde = line.find('~');
    if (tilde == std::string::npos) throw ScmParseError("missing '~' in line: " + line);
    const std::size_t colon = line.find(':', tilde);
    if (colon == std::string::npos) throw ScmParseError("missing ':' in line: " + line);

    ScmNode node;
    std::istringstream head(line.substr(0, tilde));
    std::string tok;
    bool have_name = false;
    while (head >> tok) {
      if (!have_name) {
        node.name = tok;
        have_name = true;
      } else if (tok.rfind("discrete(", 0) == 0 && tok.back() == ')') {
        node.discrete = true;
        node.cardinality = std::stoul(tok.substr(9, tok.size() - 10));
        if (node.cardinality < 1) throw ScmParseError("cardinality must be >= 1");
      } else if (tok.rfind("role=", 0) == 0) {
        node.role = role_from_name(tok.substr(5));
      } else if (tok == "group") {
        node.group_key = true;
      } else {
        throw ScmParseError("unknown annotation '" + tok + "' in line: " + line);
      }
    }
    if (!have_name || !detail::valid_identifier(node.name))
      throw ScmParseError("bad node name in line: " + line);

    node.noise = parse_dist(detail::trim(line.substr(tilde + 1, colon - tilde - 1)));
    node.mech = parse_expr(line.substr(colon + 1));

    std::set<std::string> used;
    node.mech->collect_variables(used);
    for (const auto& v : used) {
      if (v == "u") continue;
      bool known = false;
      for (const auto& n : so_far.nodes_)
        if (n.name == v) known = true;
      if (!known)
        throw ScmParseError("mechanism of '" + node.name + "' references '" + v +
                            "' before its declaration");
      node.parents.push_back(v);
    }
    return node;
  }

  static NoiseDist parse_dist(const std::string& text) {
    const std::size_t open = text.find('(');
    if (open == std::string::npos || text.back() != ')')
      throw ScmParseError("bad noise distribution '" + text + "'");
    const std::string name = detail::trim(text.substr(0, open));
    std::vector<double> args;
    std::string inner = text.substr(open + 1, text.size() - open - 2);
    std::istringstream in(inner);
    std::string piece;
    while (std::getline(in, piece, ',')) args.push_back(std::stod(detail::trim(piece)));
    NoiseDist d;
    if (name == "normal" && args.size() == 2) {
      d.kind = NoiseDist::Kind::Normal;
      d.a = args[0];
      d.b = args[1];
    } else if (name == "uniform" && args.size() == 2) {
      d.kind = NoiseDist::Kind::Uniform;
      d.a = args[0];
      d.b = args[1];
    } else if (name == "bernoulli" && args.size() == 1) {
      d.kind = NoiseDist::Kind::Bernoulli;
      d.a = args[0];
    } else if (name == "discrete_uniform" && args.size() == 1) {
      d.kind = NoiseDist::Kind::DiscreteUniform;
      d.a = args[0];
    } else {
      throw ScmParseError("bad noise distribution '" + text + "'");
    }
    return d;
  }

  void add_node(ScmNode node) { nodes_.push_back(std::move(node)); }

  void finalize() {
    std::vector<std::string> names;
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& n : nodes_) {
      names.push_back(n.name);
      for (const auto& p : n.parents) edges.emplace_back(p, n.name);
    }
    dag_ = CausalDag(std::move(names), std::move(edges));
  }

  std::vector<ScmNode> nodes_;
  CausalDag dag_;
};

// --- ground-truth effects ----------------------------------------------------

struct OracleEffects {
  double ace = 0.0;
  std::optional<double> ace_std_error;          // absent for exact methods
  std::map<long long, double> cace;             // group value -> effect
  std::map<long long, double> cace_std_error;
  std::optional<double> ice_constant;           // set for linear systems
  std::string method;                           // closed-form | enumeration | monte-carlo
  std::size_t draws = 0;
};

namespace detail {

// Total derivative dOutcome/dTreatment through an all-affine SCM.
inline std::optional<double> linear_total_effect(const SyntheticScm& scm, std::size_t treatment,
                                                 std::size_t outcome) {
  const auto& nodes = scm.nodes();
  for (const auto& n : nodes)
    if (n.discrete) return std::nullopt;
  std::vector<double> ddx(nodes.size(), 0.0);
  ddx[treatment] = 1.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i == treatment) continue;
    const auto aff = nodes[i].mech->affine();
    if (!aff) return std::nullopt;
    double acc = 0.0;
    for (const auto& [var, coeff] : aff->coeff) {
      if (var == "u") continue;
      acc += coeff * ddx[scm.index_of(var)];
    }
    ddx[i] = acc;
  }
  return ddx[outcome];
}

struct GroupAccum {
  double sum = 0.0, sumsq = 0.0;
  double weight = 0.0;
  std::size_t count = 0;
};

}  // namespace detail

// ACE / CACE / per-unit ICE computed by intervening in the true SCM.
// Closed form when every mechanism is affine and nothing is discretized;
// exact enumeration when all noises have finite joint support (up to
// `enumeration_limit` states); Monte-Carlo with `mc_draws` paired draws
// otherwise.
inline OracleEffects oracle_effects(const SyntheticScm& scm, const std::string& treatment,
                                    const std::string& outcome, double a1, double a0,
                                    std::optional<std::string> group_node = std::nullopt,
                                    std::size_t mc_draws = 1000000, std::uint64_t seed = 20240801,
                                    std::size_t enumeration_limit = 1 << 20) {
  const std::size_t ti = scm.index_of(treatment), yi = scm.index_of(outcome);
  std::optional<std::size_t> gi;
  if (group_node) {
    gi = scm.index_of(*group_node);
    for (std::size_t d : scm.dag().descendant_indices(ti))
      if (d == *gi)
        throw UnsupportedMechanism("group node '" + *group_node +
                                   "' is a descendant of the treatment");
  }

  OracleEffects out;

  // closed form for fully linear systems
  if (const auto slope = detail::linear_total_effect(scm, ti, yi)) {
    out.method = "closed-form";
    out.ace = *slope * (a1 - a0);
    out.ice_constant = out.ace;
    if (gi) {
      // no interaction terms exist, every group shares the global effect;
      // enumerate observed group levels by a small observational draw
      const Dataset probe = scm.sample(4096, derive_seed(seed, 7));
      std::set<long long> levels;
      for (std::size_t r = 0; r < probe.rows(); ++r)
        levels.insert(static_cast<long long>(probe.values(r, *gi)));
      for (long long g : levels) out.cace[g] = out.ace;
    }
    return out;
  }

  // exact enumeration over finite joint noise support
  bool finite = true;
  std::size_t states = 1;
  for (const auto& n : scm.nodes()) {
    if (!n.noise.finite_support()) {
      finite = false;
      break;
    }
    states *= n.noise.support().size();
    if (states > enumeration_limit) {
      finite = false;
      break;
    }
  }

  if (finite) {
    out.method = "enumeration";
    const std::size_t d = scm.nodes().size();
    std::vector<std::vector<std::pair<double, double>>> sup;
    for (const auto& n : scm.nodes()) sup.push_back(n.noise.support());
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> noise(d);
    double ace = 0.0;
    std::map<long long, detail::GroupAccum> groups;
    for (;;) {
      double prob = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        noise[i] = sup[i][idx[i]].first;
        prob *= sup[i][idx[i]].second;
      }
      const auto y1 = scm.propagate(noise, ti, a1);
      const auto y0 = scm.propagate(noise, ti, a0);
      const double ice = y1[yi] - y0[yi];
      ace += prob * ice;
      if (gi) {
        const auto obs = scm.propagate(noise);
        auto& acc = groups[static_cast<long long>(obs[*gi])];
        acc.sum += prob * ice;
        acc.weight += prob;
      }
      std::size_t carry = 0;
      while (carry < d && ++idx[carry] == sup[carry].size()) idx[carry++] = 0;
      if (carry == d) break;
    }
    out.ace = ace;
    for (const auto& [g, acc] : groups)
      if (acc.weight > 0) out.cace[g] = acc.sum / acc.weight;
    return out;
  }

  // paired Monte-Carlo fallback
  out.method = "monte-carlo";
  out.draws = mc_draws;
  const Tensor u = scm.noise_matrix(mc_draws, seed);
  std::vector<double> noise(scm.nodes().size());
  double sum = 0.0, sumsq = 0.0;
  std::map<long long, detail::GroupAccum> groups;
  for (std::size_t r = 0; r < mc_draws; ++r) {
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = u(r, i);
    const double ice = scm.ice_of_noise(noise, ti, yi, a1, a0);
    sum += ice;
    sumsq += ice * ice;
    if (gi) {
      const auto obs = scm.propagate(noise);
      auto& acc = groups[static_cast<long long>(obs[*gi])];
      acc.sum += ice;
      acc.sumsq += ice * ice;
      acc.count += 1;
    }
  }
  const double n = static_cast<double>(mc_draws);
  out.ace = sum / n;
  const double var = std::max(0.0, sumsq / n - out.ace * out.ace);
  out.ace_std_error = std::sqrt(var / n);
  for (const auto& [g, acc] : groups) {
    if (acc.count == 0) continue;
    const double m = acc.sum / static_cast<double>(acc.count);
    out.cace[g] = m;
    const double gv = std::max(0.0, acc.sumsq / static_cast<double>(acc.count) - m * m);
    out.cace_std_error[g] = std::sqrt(gv / static_cast<double>(acc.count));
  }
  return out;
}

// --- backdoor adjustment ------------------------------------------------------

// Plug-in stratified estimator of E[Y_a1] - E[Y_a0] over the adjustment
// set parents(treatment), for discrete adjustment variables on raw
// (non-dequantized) data. Entirely independent of any flow model.
inline EffectEstimate backdoor_ace(const Dataset& data, const CausalDag& dag, double a1,
                                   double a0) {
  if (data.rows() == 0) throw EmptyDataset("backdoor estimator needs data");
  const auto ti = data.role_index(NodeRole::Treatment);
  const auto yi = data.role_index(NodeRole::Outcome);
  if (!ti) throw MissingObservedTreatment("no treatment column");
  if (!yi) throw ConfigError("no outcome column");
  if (data.dequantized) throw ConfigError("backdoor adjustment expects raw data");

  const auto adjust = dag.parent_indices(dag.index_of(data.columns[*ti].name));
  for (std::size_t j : adjust)
    if (!data.columns[j].discrete)
      throw ConfigError("adjustment variable '" + data.columns[j].name + "' must be discrete");

  struct Arm {
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
  };
  struct Stratum {
    std::size_t n = 0;
    Arm arm1, arm0;
  };
  std::map<std::vector<long long>, Stratum> strata;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    std::vector<long long> key;
    key.reserve(adjust.size());
    for (std::size_t j : adjust) key.push_back(static_cast<long long>(data.values(r, j)));
    auto& s = strata[key];
    s.n += 1;
    const double a = data.values(r, *ti);
    const double y = data.values(r, *yi);
    if (a == a1) {
      s.arm1.sum += y;
      s.arm1.sumsq += y * y;
      s.arm1.n += 1;
    } else if (a == a0) {
      s.arm0.sum += y;
      s.arm0.sumsq += y * y;
      s.arm0.n += 1;
    }
  }

  const double n = static_cast<double>(data.rows());
  double diff = 0.0, var = 0.0;
  for (const auto& [key, s] : strata) {
    if (s.arm1.n == 0 || s.arm0.n == 0) {
      std::string name;
      for (std::size_t k = 0; k < adjust.size(); ++k)
        name += (k ? "," : "") + data.columns[adjust[k]].name + "=" + std::to_string(key[k]);
      throw PositivityViolation("stratum {" + name + "} has no " +
                                (s.arm1.n == 0 ? "treated" : "untreated") + " units");
    }
    const double w = static_cast<double>(s.n) / n;
    const double m1 = s.arm1.sum / static_cast<double>(s.arm1.n);
    const double m0 = s.arm0.sum / static_cast<double>(s.arm0.n);
    diff += w * (m1 - m0);
    const double v1 = std::max(0.0, s.arm1.sumsq / s.arm1.n - m1 * m1);
    const double v0 = std::max(0.0, s.arm0.sumsq / s.arm0.n - m0 * m0);
    var += w * w * (v1 / static_cast<double>(s.arm1.n) + v0 / static_cast<double>(s.arm0.n));
  }

  EffectEstimate est;
  est.estimate = diff;
  est.std_error = std::sqrt(var);
  est.n_units = data.rows();
  return est;
}

}  // namespace cgflow
