#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cgflow/dag.hpp"
#include "cgflow/errors.hpp"
#include "cgflow/mlp.hpp"
#include "cgflow/quadrature.hpp"
#include "cgflow/rng.hpp"
#include "cgflow/tape.hpp"
#include "cgflow/tensor.hpp"

namespace cgflow {

struct FlowConfig {
  std::vector<std::size_t> conditioner_hidden = {40, 30, 20};
  std::vector<std::size_t> transformer_hidden = {15, 10, 5};
  std::size_t context_width = 10;
  std::size_t quadrature_nodes = 50;
  double positivity_delta = 1e-6;
  double root_tolerance = 1e-8;
};

// Per-node clamp values for interventional inversion: either one value
// broadcast over the batch (tensor of size 1) or one value per row.
using ClampMap = std::map<std::size_t, Tensor>;

// Normalizing flow whose forward map z = T(x) factorizes over a causal
// DAG: each coordinate gets a context vector from a parent-masked
// conditioner and passes through a strictly increasing transformer
//   tau_i(x; h) = integral_0^x g_i(t, h) dt + beta_i(h),
// with g_i > 0 enforced by elu(.)+1+delta. The Jacobian is lower
// triangular in topological order, so log|det| = sum_i log g_i(x_i, h_i).
//
// The integrand network takes (t, h); its first layer is stored as the
// two blocks W_t (scalar input) and W_h (context input) so the context
// projection is computed once per unit instead of once per quadrature
// point.
class FlowModel {
 public:
  FlowModel() : quad_(2) {}

  FlowModel(CausalDag dag, FlowConfig cfg, Rng& rng)
      : dag_(std::move(dag)), cfg_(cfg), quad_(cfg.quadrature_nodes) {
    const std::size_t d = dag_.size();
    const std::size_t c = cfg_.context_width;
    const std::size_t w1 = cfg_.transformer_hidden.empty() ? 1 : cfg_.transformer_hidden[0];
    for (std::size_t i = 0; i < d; ++i) {
      conditioner_.emplace_back(widths(d, cfg_.conditioner_hidden, c), rng);
      const Tensor joint = glorot_uniform(1 + c, w1, rng);
      Tensor tw(1, w1), hw(c, w1);
      for (std::size_t j = 0; j < w1; ++j) tw(0, j) = joint(0, j);
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t j = 0; j < w1; ++j) hw(k, j) = joint(1 + k, j);
      int_tw_.push_back(std::move(tw));
      int_hw_.push_back(std::move(hw));
      int_b1_.push_back(Tensor(1, w1));
      int_rest_.emplace_back(rest_widths(w1), rng);
      offset_.emplace_back(widths(c, cfg_.transformer_hidden, 1), rng);
      Tensor mask(1, d);
      for (std::size_t j : dag_.parent_indices(i)) mask(0, j) = 1.0;
      masks_.push_back(std::move(mask));
    }
  }

  const CausalDag& dag() const { return dag_; }
  const FlowConfig& config() const { return cfg_; }
  std::size_t dimension() const { return dag_.size(); }

  Mlp& conditioner(std::size_t i) { return conditioner_[i]; }
  Mlp& offset(std::size_t i) { return offset_[i]; }
  Mlp& integrand_rest(std::size_t i) { return int_rest_[i]; }
  Tensor& integrand_t_weight(std::size_t i) { return int_tw_[i]; }
  Tensor& integrand_h_weight(std::size_t i) { return int_hw_[i]; }
  Tensor& integrand_bias1(std::size_t i) { return int_b1_[i]; }
  const Mlp& conditioner(std::size_t i) const { return conditioner_[i]; }

  // Serialization / optimizer order: per node, conditioner layers, then
  // the integrand (t-weights, h-weights, first bias, remaining layers),
  // then the offset net, each layer as weight then bias.
  template <typename Fn>
  void visit_params(Fn&& fn) {
    for (std::size_t i = 0; i < dag_.size(); ++i) {
      conditioner_[i].visit_params(fn);
      fn(int_tw_[i]);
      fn(int_hw_[i]);
      fn(int_b1_[i]);
      int_rest_[i].visit_params(fn);
      offset_[i].visit_params(fn);
    }
  }

  std::size_t param_count() {
    std::size_t n = 0;
    visit_params([&](Tensor& t) { n += t.size(); });
    return n;
  }

  // --- forward map ------------------------------------------------------

  struct TransformResult {
    Tensor z;       // n x d
    Tensor logdet;  // n x 1
  };

  TransformResult transform_batch(const Tensor& x) const {
    check_batch(x);
    const std::size_t n = x.rows(), d = dag_.size();
    TransformResult out{Tensor(n, d), Tensor(n, 1)};
    const std::size_t chunk = 4096;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c0 = 0; c0 < static_cast<std::ptrdiff_t>(n); c0 += chunk) {
      const std::size_t lo = static_cast<std::size_t>(c0);
      const std::size_t hi = std::min(n, lo + chunk);
      const Tensor xs = slice_rows(x, lo, hi);
      for (std::size_t i = 0; i < d; ++i) {
        const Tensor h = context(i, xs);
        const Tensor hproj = context_projection(i, h);
        const Tensor xi = col(xs, i);
        const Tensor integral = integral_from_projection(i, xi, hproj);
        const Tensor beta = offset_[i].forward(h);
        const Tensor gd = integrand_from_projection(i, xi, hproj);
        for (std::size_t u = 0; u < xs.rows(); ++u) {
          out.z(lo + u, i) = integral(u, 0) + beta(u, 0);
          out.logdet(lo + u, 0) += std::log(gd(u, 0));
        }
      }
    }
    return out;
  }

  std::pair<std::vector<double>, double> transform(const std::vector<double>& x) const {
    const auto r = transform_batch(row_tensor(x));
    return {std::vector<double>(r.z.storage()), r.logdet(0, 0)};
  }

  // Per-node conditional log-density terms; their sum is the joint
  // log-density (the factorization is additive by construction).
  std::vector<double> log_density_terms(const std::vector<double>& x) const {
    const Tensor xs = row_tensor(x);
    std::vector<double> terms(dag_.size());
    for (std::size_t i = 0; i < dag_.size(); ++i) {
      const Tensor h = context(i, xs);
      const Tensor hproj = context_projection(i, h);
      const Tensor xi = col(xs, i);
      const double z = integral_from_projection(i, xi, hproj)(0, 0) + offset_[i].forward(h)(0, 0);
      const double g = integrand_from_projection(i, xi, hproj)(0, 0);
      terms[i] = -0.5 * z * z - 0.5 * std::log(2.0 * M_PI) + std::log(g);
    }
    return terms;
  }

  double log_density(const std::vector<double>& x) const {
    double acc = 0.0;
    for (double t : log_density_terms(x)) acc += t;
    return acc;
  }

  Tensor log_density_batch(const Tensor& x) const {
    const auto r = transform_batch(x);
    Tensor out(x.rows(), 1);
    const double c = -0.5 * static_cast<double>(dag_.size()) * std::log(2.0 * M_PI);
    for (std::size_t u = 0; u < x.rows(); ++u) {
      double q = 0.0;
      for (std::size_t i = 0; i < dag_.size(); ++i) q += r.z(u, i) * r.z(u, i);
      out(u, 0) = c - 0.5 * q + r.logdet(u, 0);
    }
    return out;
  }

  // --- inverse map ------------------------------------------------------

  // Visits nodes in topological order; clamped coordinates are set
  // verbatim (the intervention), the rest solve tau_i(x) = z_i by
  // bracketed bisection.
  Tensor inverse_batch(const Tensor& z, const ClampMap& clamps = {}) const {
    check_batch(z);
    const std::size_t n = z.rows(), d = dag_.size();
    Tensor x(n, d);
    const std::size_t chunk = 4096;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c0 = 0; c0 < static_cast<std::ptrdiff_t>(n); c0 += chunk) {
      const std::size_t lo = static_cast<std::size_t>(c0);
      const std::size_t hi = std::min(n, lo + chunk);
      Tensor xs(hi - lo, d);
      const Tensor zs = slice_rows(z, lo, hi);
      for (std::size_t i : dag_.topo_order()) {
        auto cl = clamps.find(i);
        if (cl != clamps.end()) {
          const Tensor& v = cl->second;
          for (std::size_t u = lo; u < hi; ++u)
            xs(u - lo, i) = v.size() == 1 ? v[0] : v(u, 0);
          continue;
        }
        solve_node_rows(i, col(zs, i), xs);
      }
      for (std::size_t u = 0; u < xs.rows(); ++u)
        for (std::size_t j = 0; j < d; ++j) x(lo + u, j) = xs(u, j);
    }
    return x;
  }

  std::vector<double> inverse(const std::vector<double>& z,
                              const std::map<std::string, double>& clamps = {}) const {
    ClampMap cm;
    for (const auto& [name, v] : clamps) cm.emplace(dag_.index_of(name), Tensor::scalar(v));
    return inverse_batch(row_tensor(z), cm).storage();
  }

  // Counterfactual re-propagation: starting from observed rows whose
  // noise is `z`, pins `clamp_node` to the per-row clamp value and
  // re-solves only the clamped node's descendants. Every other coordinate
  // already satisfies tau_i(x_i) = z_i and is kept verbatim.
  Tensor repropagate_batch(const Tensor& x_obs, const Tensor& z, std::size_t clamp_node,
                           const Tensor& clamp_col) const {
    check_batch(x_obs);
    if (z.rows() != x_obs.rows() || clamp_col.rows() != x_obs.rows())
      throw DimensionMismatch("repropagate: row count mismatch");
    const std::size_t n = x_obs.rows(), d = dag_.size();
    const auto desc = dag_.descendant_indices(clamp_node);
    std::vector<bool> to_solve(d, false);
    for (std::size_t i : desc) to_solve[i] = true;
    Tensor x = x_obs;
    for (std::size_t u = 0; u < n; ++u) x(u, clamp_node) = clamp_col(u, 0);
    const std::size_t chunk = 4096;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c0 = 0; c0 < static_cast<std::ptrdiff_t>(n); c0 += chunk) {
      const std::size_t lo = static_cast<std::size_t>(c0);
      const std::size_t hi = std::min(n, lo + chunk);
      Tensor xs = slice_rows(x, lo, hi);
      for (std::size_t i : dag_.topo_order()) {
        if (!to_solve[i]) continue;
        Tensor zc(hi - lo, 1);
        for (std::size_t u = lo; u < hi; ++u) zc(u - lo, 0) = z(u, i);
        solve_node_rows(i, zc, xs);
      }
      for (std::size_t u = 0; u < xs.rows(); ++u)
        for (std::size_t j = 0; j < d; ++j) x(lo + u, j) = xs(u, j);
    }
    return x;
  }

  // Ancestral sampling: z ~ N(0, I_d), x = inverse(z) with optional
  // clamps (interventional sampling over a mutilated graph).
  Tensor sample(std::size_t n, std::uint64_t seed, const ClampMap& clamps = {}) const {
    Rng rng(seed);
    Tensor z(n, dag_.size());
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = rng.normal();
    return inverse_batch(z, clamps);
  }

  // --- training ---------------------------------------------------------

  // Mean negative log-likelihood of the batch, recorded on the tape.
  Tape::NodeId nll_on_tape(Tape& tape, ParamBinding& binding, const Tensor& x) {
    check_batch(x);
    const std::size_t n = x.rows(), d = dag_.size(), q = quad_.size();
    Tape::NodeId acc = tape.constant(Tensor(n, 1));
    const Tensor wcol = Tensor::column(quad_.weights);
    const bool hidden = !cfg_.transformer_hidden.empty();
    for (std::size_t i = 0; i < d; ++i) {
      const Tape::NodeId h = conditioner_[i].forward(tape, binding, tape.constant(masked(x, i)));
      const Tape::NodeId beta = offset_[i].forward(tape, binding, h);
      const Tape::NodeId hproj =
          tape.add_bias(tape.matmul(h, binding.bind(&int_hw_[i])), binding.bind(&int_b1_[i]));

      Tensor tcol(n * q, 1), xhalf(n, 1), xcol(n, 1);
      for (std::size_t u = 0; u < n; ++u) {
        const double xi = x(u, i);
        xcol(u, 0) = xi;
        xhalf(u, 0) = 0.5 * xi;
        for (std::size_t k = 0; k < q; ++k)
          tcol(u * q + k, 0) = 0.5 * xi * (1.0 + quad_.nodes[k]);
      }

      const Tape::NodeId tw = binding.bind(&int_tw_[i]);
      Tape::NodeId pre = tape.add(tape.matmul(tape.constant(std::move(tcol)), tw),
                                  tape.repeat_rows(hproj, q));
      if (hidden) pre = tape.tanh_(pre);
      const Tape::NodeId gq =
          tape.elu1p(int_rest_[i].forward(tape, binding, pre), cfg_.positivity_delta);
      const Tape::NodeId wsum = tape.matmul(tape.reshape(gq, n, q), tape.constant(wcol));
      const Tape::NodeId z = tape.add(tape.mul_const(wsum, std::move(xhalf)), beta);

      Tape::NodeId pre_d =
          tape.add(tape.matmul(tape.constant(std::move(xcol)), tw), hproj);
      if (hidden) pre_d = tape.tanh_(pre_d);
      const Tape::NodeId gdiag =
          tape.elu1p(int_rest_[i].forward(tape, binding, pre_d), cfg_.positivity_delta);
      const Tape::NodeId term = tape.sub(tape.scale(tape.mul(z, z), 0.5), tape.log_(gdiag));
      acc = tape.add(acc, term);
    }
    return tape.add_scalar(tape.mean_all(acc),
                           0.5 * static_cast<double>(d) * std::log(2.0 * M_PI));
  }

  // Mean NLL without recording; chunked for large inputs.
  double mean_nll(const Tensor& x) const {
    const Tensor ld = log_density_batch(x);
    double acc = 0.0;
    for (std::size_t u = 0; u < ld.rows(); ++u) acc -= ld(u, 0);
    return acc / static_cast<double>(ld.rows());
  }

  // --- exposed internals (tests, counterfactual engine) ------------------

  // Context vector(s) for node i given full row(s) x; only parent columns
  // reach the network, every other coordinate is zeroed by the mask.
  Tensor context(std::size_t i, const Tensor& x) const {
    return conditioner_[i].forward(masked(x, i));
  }

  // Strictly positive integrand g_i(t, h) evaluated rowwise.
  Tensor integrand_pos(std::size_t i, const Tensor& t, const Tensor& h) const {
    return integrand_from_projection(i, t, context_projection(i, h));
  }

  // tau_i(x; h) = integral_0^x g_i + beta_i(h), elementwise over rows.
  Tensor tau(std::size_t i, const Tensor& xcol, const Tensor& h) const {
    Tensor out = integral_from_projection(i, xcol, context_projection(i, h));
    const Tensor beta = offset_[i].forward(h);
    for (std::size_t u = 0; u < out.rows(); ++u) out(u, 0) += beta(u, 0);
    return out;
  }

 private:
  static std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden,
                                         std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
  }

  std::vector<std::size_t> rest_widths(std::size_t w1) const {
    std::vector<std::size_t> w{w1};
    if (!cfg_.transformer_hidden.empty()) {
      for (std::size_t l = 1; l < cfg_.transformer_hidden.size(); ++l)
        w.push_back(cfg_.transformer_hidden[l]);
      w.push_back(1);
    }
    return w;
  }

  void check_batch(const Tensor& m) const {
    if (m.cols() != dag_.size())
      throw DimensionMismatch("expected " + std::to_string(dag_.size()) + " columns, got " +
                              m.shape_str());
    if (!m.all_finite()) throw NonFiniteInput("non-finite input");
  }

  Tensor row_tensor(const std::vector<double>& x) const {
    if (x.size() != dag_.size())
      throw DimensionMismatch("expected " + std::to_string(dag_.size()) + " values, got " +
                              std::to_string(x.size()));
    Tensor t(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) t(0, j) = x[j];
    return t;
  }

  Tensor masked(const Tensor& x, std::size_t i) const {
    Tensor m = x;
    for (std::size_t u = 0; u < m.rows(); ++u)
      for (std::size_t j = 0; j < m.cols(); ++j) m(u, j) *= masks_[i](0, j);
    return m;
  }

  static Tensor col(const Tensor& x, std::size_t i) {
    Tensor c(x.rows(), 1);
    for (std::size_t u = 0; u < x.rows(); ++u) c(u, 0) = x(u, i);
    return c;
  }

  static Tensor slice_rows(const Tensor& x, std::size_t lo, std::size_t hi) {
    Tensor s(hi - lo, x.cols());
    for (std::size_t u = lo; u < hi; ++u)
      for (std::size_t j = 0; j < x.cols(); ++j) s(u - lo, j) = x(u, j);
    return s;
  }

  // h * W_h + b1, computed once per unit and reused across quadrature
  // points and bisection iterations.
  Tensor context_projection(std::size_t i, const Tensor& h) const {
    Tensor p = matmul(h, int_hw_[i]);
    for (std::size_t u = 0; u < p.rows(); ++u)
      for (std::size_t j = 0; j < p.cols(); ++j) p(u, j) += int_b1_[i](0, j);
    return p;
  }

  // g_i at scalar positions t (one per row) given the precomputed context
  // projection.
  Tensor integrand_from_projection(std::size_t i, const Tensor& t, const Tensor& hproj) const {
    const std::size_t n = t.rows(), w1 = hproj.cols();
    Tensor pre(n, w1);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t j = 0; j < w1; ++j) pre(u, j) = t(u, 0) * int_tw_[i](0, j) + hproj(u, j);
    return positive_rest(i, pre);
  }

  // integral_0^x g_i(t) dt per row via Clenshaw-Curtis rescaled onto
  // [0, x] (valid for either sign of x).
  Tensor integral_from_projection(std::size_t i, const Tensor& xcol, const Tensor& hproj) const {
    const std::size_t n = xcol.rows(), q = quad_.size(), w1 = hproj.cols();
    Tensor pre(n * q, w1);
    for (std::size_t u = 0; u < n; ++u) {
      const double xi = xcol(u, 0);
      for (std::size_t k = 0; k < q; ++k) {
        const double t = 0.5 * xi * (1.0 + quad_.nodes[k]);
        double* row = pre.data() + (u * q + k) * w1;
        const double* hp = hproj.data() + u * w1;
        for (std::size_t j = 0; j < w1; ++j) row[j] = t * int_tw_[i](0, j) + hp[j];
      }
    }
    const Tensor g = positive_rest(i, pre);
    Tensor out(n, 1);
    for (std::size_t u = 0; u < n; ++u) {
      double acc = 0.0;
      for (std::size_t k = 0; k < q; ++k) acc += quad_.weights[k] * g(u * q + k, 0);
      out(u, 0) = 0.5 * xcol(u, 0) * acc;
    }
    return out;
  }

  // tanh (when hidden layers exist), the remaining layers, then the
  // positivity map elu(.)+1+delta.
  Tensor positive_rest(std::size_t i, Tensor pre) const {
    if (!cfg_.transformer_hidden.empty())
      for (std::size_t k = 0; k < pre.size(); ++k) pre[k] = std::tanh(pre[k]);
    Tensor raw = int_rest_[i].forward(pre);
    for (std::size_t k = 0; k < raw.size(); ++k)
      raw[k] = raw[k] >= 0.0 ? raw[k] + 1.0 + cfg_.positivity_delta
                             : std::exp(raw[k]) + cfg_.positivity_delta;
    return raw;
  }

  // Monotone root solve of tau_i(x_i) = z for every row of a chunk whose
  // parent columns are final. Lockstep bracketed bisection.
  void solve_node_rows(std::size_t i, const Tensor& z, Tensor& x) const {
    const std::size_t n = x.rows();
    const Tensor h = context(i, x);
    const Tensor hproj = context_projection(i, h);
    const Tensor beta = offset_[i].forward(h);
    // residual target for the pure integral part
    std::vector<double> target(n), lo(n, -10.0), hi(n, 10.0);
    for (std::size_t u = 0; u < n; ++u) target[u] = z(u, 0) - beta(u, 0);

    auto eval = [&](const std::vector<double>& at) {
      Tensor c(n, 1);
      for (std::size_t u = 0; u < n; ++u) c(u, 0) = at[u];
      return integral_from_projection(i, c, hproj);
    };

    // geometric bracket expansion, doubling up to 60 times
    for (int round = 0; round < 60; ++round) {
      Tensor flo = eval(lo), fhi = eval(hi);
      bool any = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (flo(u, 0) > target[u]) {
          lo[u] *= 2.0;
          any = true;
        }
        if (fhi(u, 0) < target[u]) {
          hi[u] *= 2.0;
          any = true;
        }
      }
      if (!any) break;
      if (round == 59) {
        Tensor f2lo = eval(lo), f2hi = eval(hi);
        for (std::size_t u = 0; u < n; ++u)
          if (f2lo(u, 0) > target[u] || f2hi(u, 0) < target[u])
            throw RootNotBracketed("node '" + dag_.name(i) +
                                   "' not bracketed after 60 expansions");
      }
    }

    // lockstep bisection to the configured absolute tolerance
    std::vector<double> mid(n);
    int guard = 0;
    while (guard++ < 220) {
      double maxw = 0.0;
      for (std::size_t u = 0; u < n; ++u) {
        mid[u] = 0.5 * (lo[u] + hi[u]);
        maxw = std::max(maxw, hi[u] - lo[u]);
      }
      if (maxw <= cfg_.root_tolerance) break;
      const Tensor fm = eval(mid);
      for (std::size_t u = 0; u < n; ++u) {
        if (fm(u, 0) < target[u])
          lo[u] = mid[u];
        else
          hi[u] = mid[u];
      }
    }
    for (std::size_t u = 0; u < n; ++u) x(u, i) = 0.5 * (lo[u] + hi[u]);
  }

  CausalDag dag_;
  FlowConfig cfg_;
  ClenshawCurtis quad_;
  std::vector<Mlp> conditioner_;
  std::vector<Tensor> int_tw_;   // integrand first layer, t block [1 x w1]
  std::vector<Tensor> int_hw_;   // integrand first layer, h block [c x w1]
  std::vector<Tensor> int_b1_;   // integrand first layer bias
  std::vector<Mlp> int_rest_;    // remaining integrand layers
  std::vector<Mlp> offset_;
  std::vector<Tensor> masks_;
};

}  // namespace cgflow
