#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "cgflow/errors.hpp"
#include "cgflow/tensor.hpp"

namespace cgflow {

// Reverse-mode gradient tape over matrix-level primitives. Each recorded
// node stores its value, an adjoint buffer, and a pull-back that scatters
// the node's adjoint into its inputs. backward() replays nodes in exact
// reverse execution order; adjoints of nodes the loss never touched stay
// zero.
class Tape {
 public:
  using NodeId = std::size_t;

  NodeId constant(Tensor value) { return push(std::move(value), {}, nullptr); }

  // Leaf with gradient. The caller keeps the id to read the accumulated
  // adjoint after backward().
  NodeId leaf(Tensor value) {
    const NodeId id = push(std::move(value), {}, nullptr);
    nodes_[id].wants_grad = true;
    nodes_[id].needs = true;
    return id;
  }

  const Tensor& value(NodeId id) const { return at(id).value; }
  const Tensor& grad(NodeId id) const { return at(id).grad; }
  std::size_t size() const { return nodes_.size(); }

  NodeId matmul(NodeId a, NodeId b) {
    Tensor v = cgflow::matmul(value(a), value(b));
    return push(std::move(v), {a, b}, [this, a, b](Node& n) {
      if (wants(a)) accumulate(a, matmul_a_bt(n.grad, value(b)));
      if (wants(b)) accumulate(b, matmul_at_b(value(a), n.grad));
    });
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw ShapeMismatch("add " + va.shape_str() + " + " + vb.shape_str());
    Tensor v = va;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += vb[k];
    return push(std::move(v), {a, b}, [this, a, b](Node& n) {
      if (wants(a)) accumulate(a, n.grad);
      if (wants(b)) accumulate(b, n.grad);
    });
  }

  NodeId sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw ShapeMismatch("sub " + va.shape_str() + " - " + vb.shape_str());
    Tensor v = va;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= vb[k];
    return push(std::move(v), {a, b}, [this, a, b](Node& n) {
      if (wants(a)) accumulate(a, n.grad);
      if (wants(b)) {
        Tensor neg = n.grad;
        for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = -neg[k];
        accumulate(b, neg);
      }
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw ShapeMismatch("mul " + va.shape_str() + " * " + vb.shape_str());
    Tensor v = va;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] *= vb[k];
    return push(std::move(v), {a, b}, [this, a, b](Node& n) {
      if (wants(a)) {
        Tensor da = n.grad;
        const Tensor& vb2 = value(b);
        for (std::size_t k = 0; k < da.size(); ++k) da[k] *= vb2[k];
        accumulate(a, da);
      }
      if (wants(b)) {
        Tensor db = n.grad;
        const Tensor& va2 = value(a);
        for (std::size_t k = 0; k < db.size(); ++k) db[k] *= va2[k];
        accumulate(b, db);
      }
    });
  }

  // rows of a plus a 1 x m bias row
  NodeId add_bias(NodeId a, NodeId bias) {
    const Tensor& va = value(a);
    const Tensor& vb = value(bias);
    if (vb.rows() != 1 || vb.cols() != va.cols())
      throw ShapeMismatch("add_bias " + va.shape_str() + " + " + vb.shape_str());
    Tensor v = va;
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += vb(0, j);
    return push(std::move(v), {a, bias}, [this, a, bias](Node& n) {
      if (wants(a)) accumulate(a, n.grad);
      if (wants(bias)) {
        Tensor db(1, n.grad.cols());
        for (std::size_t i = 0; i < n.grad.rows(); ++i)
          for (std::size_t j = 0; j < n.grad.cols(); ++j) db(0, j) += n.grad(i, j);
        accumulate(bias, db);
      }
    });
  }

  NodeId scale(NodeId a, double s) {
    Tensor v = value(a);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] *= s;
    return push(std::move(v), {a}, [this, a, s](Node& n) {
      if (!wants(a)) return;
      Tensor da = n.grad;
      for (std::size_t k = 0; k < da.size(); ++k) da[k] *= s;
      accumulate(a, da);
    });
  }

  // elementwise multiply by a fixed tensor (no gradient into the factor)
  NodeId mul_const(NodeId a, Tensor factor) {
    const Tensor& va = value(a);
    if (!va.same_shape(factor))
      throw ShapeMismatch("mul_const " + va.shape_str() + " * " + factor.shape_str());
    Tensor v = va;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] *= factor[k];
    return push(std::move(v), {a}, [this, a, f = std::move(factor)](Node& n) {
      if (!wants(a)) return;
      Tensor da = n.grad;
      for (std::size_t k = 0; k < da.size(); ++k) da[k] *= f[k];
      accumulate(a, da);
    });
  }

  NodeId tanh_(NodeId a) {
    Tensor v = value(a);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::tanh(v[k]);
    return push(std::move(v), {a}, [this, a](Node& n) {
      if (!wants(a)) return;
      Tensor da = n.grad;
      for (std::size_t k = 0; k < da.size(); ++k) da[k] *= 1.0 - n.value[k] * n.value[k];
      accumulate(a, da);
    });
  }

  // elu(u) + 1 + delta: strictly positive, >= delta
  NodeId elu1p(NodeId a, double delta) {
    const Tensor& va = value(a);
    Tensor v = va;
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = va[k] >= 0.0 ? va[k] + 1.0 + delta : std::exp(va[k]) + delta;
    return push(std::move(v), {a}, [this, a, delta](Node& n) {
      if (!wants(a)) return;
      Tensor da = n.grad;
      const Tensor& u = value(a);
      for (std::size_t k = 0; k < da.size(); ++k)
        da[k] *= u[k] >= 0.0 ? 1.0 : n.value[k] - delta;
      accumulate(a, da);
    });
  }

  NodeId log_(NodeId a) {
    const Tensor& va = value(a);
    Tensor v = va;
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::log(va[k]);
    return push(std::move(v), {a}, [this, a](Node& n) {
      if (!wants(a)) return;
      Tensor da = n.grad;
      const Tensor& u = value(a);
      for (std::size_t k = 0; k < da.size(); ++k) da[k] /= u[k];
      accumulate(a, da);
    });
  }

  // [n, m] -> [n*r, m]; row i expands to rows i*r .. i*r+r-1
  NodeId repeat_rows(NodeId a, std::size_t r) {
    const Tensor& va = value(a);
    Tensor v(va.rows() * r, va.cols());
    for (std::size_t i = 0; i < va.rows(); ++i)
      for (std::size_t q = 0; q < r; ++q)
        for (std::size_t j = 0; j < va.cols(); ++j) v(i * r + q, j) = va(i, j);
    return push(std::move(v), {a}, [this, a, r](Node& n) {
      if (!wants(a)) return;
      const Tensor& va2 = value(a);
      Tensor da(va2.rows(), va2.cols());
      for (std::size_t i = 0; i < va2.rows(); ++i)
        for (std::size_t q = 0; q < r; ++q)
          for (std::size_t j = 0; j < va2.cols(); ++j) da(i, j) += n.grad(i * r + q, j);
      accumulate(a, da);
    });
  }

  NodeId concat_cols(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rows() != vb.rows())
      throw ShapeMismatch("concat_cols " + va.shape_str() + " | " + vb.shape_str());
    Tensor v(va.rows(), va.cols() + vb.cols());
    for (std::size_t i = 0; i < va.rows(); ++i) {
      for (std::size_t j = 0; j < va.cols(); ++j) v(i, j) = va(i, j);
      for (std::size_t j = 0; j < vb.cols(); ++j) v(i, va.cols() + j) = vb(i, j);
    }
    return push(std::move(v), {a, b}, [this, a, b](Node& n) {
      const std::size_t ca = value(a).cols(), cb = value(b).cols();
      if (wants(a)) {
        Tensor da(n.grad.rows(), ca);
        for (std::size_t i = 0; i < da.rows(); ++i)
          for (std::size_t j = 0; j < ca; ++j) da(i, j) = n.grad(i, j);
        accumulate(a, da);
      }
      if (wants(b)) {
        Tensor db(n.grad.rows(), cb);
        for (std::size_t i = 0; i < db.rows(); ++i)
          for (std::size_t j = 0; j < cb; ++j) db(i, j) = n.grad(i, ca + j);
        accumulate(b, db);
      }
    });
  }

  NodeId reshape(NodeId a, std::size_t rows, std::size_t cols) {
    const Tensor& va = value(a);
    if (va.size() != rows * cols)
      throw ShapeMismatch("reshape " + va.shape_str() + " to " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    Tensor v(rows, cols);
    v.storage() = va.storage();
    return push(std::move(v), {a}, [this, a](Node& n) {
      if (!wants(a)) return;
      const Tensor& va2 = value(a);
      Tensor da(va2.rows(), va2.cols());
      da.storage() = n.grad.storage();
      accumulate(a, da);
    });
  }

  NodeId mean_all(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (std::size_t k = 0; k < va.size(); ++k) s += va[k];
    const double inv = 1.0 / static_cast<double>(va.size());
    return push(Tensor::scalar(s * inv), {a}, [this, a, inv](Node& n) {
      if (!wants(a)) return;
      const Tensor& va2 = value(a);
      Tensor da(va2.rows(), va2.cols(), n.grad[0] * inv);
      accumulate(a, da);
    });
  }

  NodeId sum_all(NodeId a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (std::size_t k = 0; k < va.size(); ++k) s += va[k];
    return push(Tensor::scalar(s), {a}, [this, a](Node& n) {
      if (!wants(a)) return;
      const Tensor& va2 = value(a);
      Tensor da(va2.rows(), va2.cols(), n.grad[0]);
      accumulate(a, da);
    });
  }

  NodeId add_scalar(NodeId a, double s) {
    Tensor v = value(a);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += s;
    return push(std::move(v), {a}, [this, a](Node& n) {
      if (wants(a)) accumulate(a, n.grad);
    });
  }

  void backward(NodeId loss) {
    Node& top = at(loss);
    if (top.value.size() != 1)
      throw LossNotScalar("loss has shape " + top.value.shape_str());
    for (auto& n : nodes_) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
      n.reached = false;
    }
    top.grad[0] = 1.0;
    mark_reachable(loss);
    for (std::size_t k = nodes_.size(); k-- > 0;) {
      Node& n = nodes_[k];
      if (n.backward && n.reached) n.backward(n);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<NodeId> inputs;
    std::function<void(Node&)> backward;
    bool wants_grad = false;  // leaf explicitly asked for gradient
    bool needs = false;       // some wanted leaf is reachable below
    bool reached = false;     // on a path from the loss
  };

  Node& at(NodeId id) {
    if (id >= nodes_.size()) throw NodeNotOnTape("node id out of range");
    return nodes_[id];
  }
  const Node& at(NodeId id) const {
    if (id >= nodes_.size()) throw NodeNotOnTape("node id out of range");
    return nodes_[id];
  }

  bool wants(NodeId id) const { return nodes_[id].needs; }

  void accumulate(NodeId id, const Tensor& g) {
    Tensor& dst = nodes_[id].grad;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
  }

  void mark_reachable(NodeId loss) {
    // only nodes between the loss and a grad-wanting leaf need work
    std::vector<NodeId> stack{loss};
    nodes_[loss].reached = true;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId v : nodes_[u].inputs) {
        if (!nodes_[v].reached) {
          nodes_[v].reached = true;
          stack.push_back(v);
        }
      }
    }
  }

  NodeId push(Tensor value, std::vector<NodeId> inputs, std::function<void(Node&)> bwd) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(bwd);
    n.needs = n.wants_grad;
    for (NodeId i : n.inputs)
      if (nodes_[i].needs || nodes_[i].wants_grad) n.needs = true;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace cgflow
