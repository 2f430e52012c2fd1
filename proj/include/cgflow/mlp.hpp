#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "cgflow/errors.hpp"
#include "cgflow/tape.hpp"
#include "cgflow/tensor.hpp"

namespace cgflow {

// Maps parameter tensors living in a model to their leaf nodes on the
// current tape, so a tensor used twice in one pass accumulates into a
// single adjoint.
class ParamBinding {
 public:
  explicit ParamBinding(Tape& tape) : tape_(&tape) {}

  Tape::NodeId bind(Tensor* p) {
    auto it = ids_.find(p);
    if (it != ids_.end()) return it->second;
    const Tape::NodeId id = tape_->leaf(*p);
    ids_.emplace(p, id);
    order_.push_back(p);
    return id;
  }

  // gradient for a bound tensor after backward()
  const Tensor& grad(Tensor* p) const {
    auto it = ids_.find(p);
    if (it == ids_.end()) throw NodeNotOnTape("parameter was never bound to this tape");
    return tape_->grad(it->second);
  }

  const std::vector<Tensor*>& bound() const { return order_; }

 private:
  Tape* tape_;
  std::map<Tensor*, Tape::NodeId> ids_;
  std::vector<Tensor*> order_;
};

enum class Activation { Tanh, Linear };

// Fully connected net: tanh hidden layers, linear output. Weights are
// stored [in x out] so a batch forward is one matmul per layer.
class Mlp {
 public:
  Mlp() = default;

  // widths = {input, hidden..., output}
  Mlp(std::vector<std::size_t> widths, Rng& rng) : widths_(std::move(widths)) {
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      weights_.push_back(glorot_uniform(widths_[l], widths_[l + 1], rng));
      biases_.push_back(Tensor(1, widths_[l + 1]));
    }
  }

  static Mlp zeros(std::vector<std::size_t> widths) {
    Mlp m;
    m.widths_ = std::move(widths);
    for (std::size_t l = 0; l + 1 < m.widths_.size(); ++l) {
      m.weights_.push_back(Tensor(m.widths_[l], m.widths_[l + 1]));
      m.biases_.push_back(Tensor(1, m.widths_[l + 1]));
    }
    return m;
  }

  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<std::size_t>& widths() const { return widths_; }

  Tensor& weight(std::size_t l) { return weights_[l]; }
  Tensor& bias(std::size_t l) { return biases_[l]; }
  const Tensor& weight(std::size_t l) const { return weights_[l]; }
  const Tensor& bias(std::size_t l) const { return biases_[l]; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  template <typename Fn>
  void visit_params(Fn&& fn) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      fn(weights_[l]);
      fn(biases_[l]);
    }
  }

  // Inference path, no recording.
  Tensor forward(const Tensor& input) const {
    check_input(input);
    Tensor h = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = matmul(h, weights_[l]);
      for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += biases_[l](0, j);
      if (l + 1 < weights_.size())
        for (std::size_t k = 0; k < h.size(); ++k) h[k] = std::tanh(h[k]);
    }
    return h;
  }

  // Training path; records on the tape through `binding`.
  Tape::NodeId forward(Tape& tape, ParamBinding& binding, Tape::NodeId input) {
    check_input(tape.value(input));
    Tape::NodeId h = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = tape.matmul(h, binding.bind(&weights_[l]));
      h = tape.add_bias(h, binding.bind(&biases_[l]));
      if (l + 1 < weights_.size()) h = tape.tanh_(h);
    }
    return h;
  }

 private:
  void check_input(const Tensor& input) const {
    if (input.cols() != input_width())
      throw ShapeMismatch("mlp expects " + std::to_string(input_width()) + " columns, got " +
                          input.shape_str());
    if (!input.all_finite()) throw NonFiniteInput("non-finite mlp input");
  }

  std::vector<std::size_t> widths_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace cgflow
