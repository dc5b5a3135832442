#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dagl/tensor.hpp"

namespace dagl {

/// A named trainable tensor. `grad` always has the shape of `value`.
struct Parameter {
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

/// Owns a model's parameters with stable addresses and unique names.
class ParameterList {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;
struct Node;

using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  Parameter* param = nullptr;
  Tape* tape = nullptr;
  bool requires_grad = false;

  /// Lazily zero-initialized gradient buffer.
  Tensor& grad_buffer();
};

/// Handle to a value, optionally recorded on a tape.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tape* tape() const { return node_ ? node_->tape : nullptr; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// A value that never receives gradients.
Var constant(Tensor value);

/// Builds an op result. If any input requires grad, the result is recorded on
/// that input's tape with `backward`; otherwise it is a plain constant.
/// Throws NumericError if `value` holds a NaN or Inf.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward);

/// Ordered record of operations for reverse-mode differentiation. Confined to
/// one thread. Nodes are appended in creation order, which is a topological
/// order, so backward just walks the record in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var watch(Parameter& p);
  /// Differentiable leaf that is not a parameter; read its gradient with grad().
  Var leaf(Tensor value);

  /// Accumulates dLoss/dParam into each watched Parameter::grad.
  void backward(const Var& loss);

  /// Gradient of the last backward() w.r.t. `v`; zeros if it was unreached.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  /// Smallest |argument| seen by any kinked op (ReLU, threshold) while recording.
  Real min_kink_distance() const { return min_kink_; }
  void note_kink_arguments(const Tensor& args);

  void append(std::shared_ptr<Node> node);

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  Real min_kink_ = std::numeric_limits<Real>::infinity();
};

}  // namespace dagl
