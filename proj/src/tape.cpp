#include "dagl/tape.hpp"

#include <algorithm>
#include <cmath>

namespace dagl {

void Parameter::zero_grad() { std::fill(grad.data().begin(), grad.data().end(), Real(0)); }

Parameter& ParameterList::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParameterList::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterList::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterList::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterList::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Tensor& Node::grad_buffer() {
  if (!grad.defined()) grad = Tensor::zeros(value.shape());
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError("non-finite value produced, shape " + shape_string(value.shape()));
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.requires_grad()) continue;
    if (tape && in.tape() != tape) throw ContractError("operands recorded on different tapes");
    tape = in.tape();
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (tape) {
    node->tape = tape;
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
    tape->append(node);
  }
  return Var(std::move(node));
}

void Tape::append(std::shared_ptr<Node> node) { nodes_.push_back(std::move(node)); }

Var Tape::watch(Parameter& p) {
  auto node = std::make_shared<Node>();
  node->value = p.value;
  node->param = &p;
  node->tape = this;
  node->requires_grad = true;
  append(node);
  return Var(std::move(node));
}

Var Tape::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->tape = this;
  node->requires_grad = true;
  append(node);
  return Var(std::move(node));
}

void Tape::backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1)
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  if (loss.tape() != this) throw ContractError("loss was not recorded on this tape");

  for (auto& n : nodes_) n->grad = Tensor();
  loss.node()->grad_buffer()[0] = Real(1);

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.grad.defined()) continue;
    if (n.backward) n.backward(n);
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  if (v.node()->grad.defined()) return v.node()->grad;
  return Tensor::zeros(v.shape());
}

void Tape::note_kink_arguments(const Tensor& args) {
  for (Real a : args.data()) min_kink_ = std::min(min_kink_, std::abs(a));
}

}  // namespace dagl
