#include "adaqat/autodiff.hpp"

#include <algorithm>

#include "builtin_ops.hpp"

namespace adaqat {

void OpRegistry::register_rule(const std::string& op, BackwardRule rule) {
  if (!rule) throw AutodiffError("register_custom_grad: empty rule for op '" + op + "'");
  std::lock_guard lock(mutex_);
  if (rules_.contains(op)) throw AutodiffError("op '" + op + "' already has a backward rule");
  rules_.emplace(op, std::make_shared<const BackwardRule>(std::move(rule)));
}

std::shared_ptr<const BackwardRule> OpRegistry::find(std::string_view op) const {
  std::lock_guard lock(mutex_);
  auto it = rules_.find(op);
  return it == rules_.end() ? nullptr : it->second;
}

OpRegistry& OpRegistry::global() {
  static OpRegistry* registry = [] {
    auto* r = new OpRegistry;
    detail::register_tensor_ops(*r);
    detail::register_quant_ops(*r);
    detail::register_layer_ops(*r);
    return r;
  }();
  return *registry;
}

void register_custom_grad(const std::string& op, BackwardRule rule) {
  OpRegistry::global().register_rule(op, std::move(rule));
}

Var Tape::constant(Tensor value) {
  TapeNode n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(std::string name, Tensor value) {
  TapeNode n;
  n.op = "parameter";
  n.value = std::move(value);
  n.requires_grad = true;
  n.param_name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, SavedContext saved) {
  TapeNode n;
  n.op = std::string(op);
  for (Var v : inputs) {
    if (!v.valid() || v.index >= nodes_.size())
      throw AutodiffError("op '" + n.op + "' refers to a value that is not on this tape");
    n.requires_grad = n.requires_grad || nodes_[v.index].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.saved = std::move(saved);
  n.rule = registry_->find(op);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const TapeNode& Tape::node(Var v) const {
  if (!v.valid() || v.index >= nodes_.size()) throw AutodiffError("invalid tape reference");
  return nodes_[v.index];
}

std::vector<Tensor> Tape::backward_nodes(Var loss) const {
  const TapeNode& root = node(loss);
  if (root.value.size() != 1)
    throw AutodiffError("backward requires a scalar loss, got shape " + shape_str(root.value.shape()));
  require_real_arithmetic("backward");

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.index] = Tensor(root.value.shape(), 1.0f);
  std::vector<const Tensor*> input_values;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const TapeNode& n = nodes_[i];
    if (!grads[i].defined() || !n.requires_grad || n.inputs.empty() || !n.rule) continue;
    input_values.clear();
    for (Var in : n.inputs) input_values.push_back(&nodes_[in.index].value);
    BackwardArgs args{grads[i], input_values, n.value, n.saved};
    std::vector<Tensor> in_grads = (*n.rule)(args);
    if (in_grads.size() != n.inputs.size())
      throw AutodiffError("backward rule of '" + n.op + "' returned " + std::to_string(in_grads.size()) +
                          " gradients for " + std::to_string(n.inputs.size()) + " inputs");
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t src = n.inputs[k].index;
      if (!nodes_[src].requires_grad || !in_grads[k].defined()) continue;
      if (in_grads[k].shape() != nodes_[src].value.shape())
        throw AutodiffError("backward rule of '" + n.op + "' produced gradient " +
                            shape_str(in_grads[k].shape()) + " for input of shape " +
                            shape_str(nodes_[src].value.shape()));
      if (!grads[src].defined()) {
        grads[src] = std::move(in_grads[k]);
      } else {
        auto dst = grads[src].data();
        auto add = in_grads[k].data();
        for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += add[e];
      }
    }
  }
  return grads;
}

GradMap Tape::backward(Var loss) const {
  std::vector<Tensor> grads = backward_nodes(loss);
  GradMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TapeNode& n = nodes_[i];
    if (n.param_name.empty()) continue;
    const Tensor g = grads[i].defined() ? grads[i] : Tensor::zeros_like(n.value);
    auto [it, inserted] = out.try_emplace(n.param_name, g);
    if (!inserted) {
      if (it->second.shape() != g.shape())
        throw AutodiffError("parameter '" + n.param_name + "' registered with two shapes");
      auto dst = it->second.data();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += g[e];
    }
  }
  return out;
}

}  // namespace adaqat
