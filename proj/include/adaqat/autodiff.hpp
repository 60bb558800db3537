#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaqat/tensor.hpp"

namespace adaqat {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index = npos;
  bool valid() const noexcept { return index != npos; }
  friend bool operator==(Var, Var) = default;
};

/// Values an op stores at forward time for its backward rule.
struct SavedContext {
  std::vector<Tensor> tensors;
  std::vector<double> scalars;
  std::vector<std::int64_t> ints;
};

struct BackwardArgs {
  const Tensor& upstream;
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const SavedContext& saved;
};

/// Returns one gradient per input, in input order. An undefined Tensor in a
/// slot means "no gradient" for that input.
using BackwardRule = std::function<std::vector<Tensor>(const BackwardArgs&)>;

class OpRegistry {
 public:
  OpRegistry() = default;
  OpRegistry(const OpRegistry&) = delete;
  OpRegistry& operator=(const OpRegistry&) = delete;

  /// Throws AutodiffError when `op` already has a rule.
  void register_rule(const std::string& op, BackwardRule rule);
  std::shared_ptr<const BackwardRule> find(std::string_view op) const;
  bool contains(std::string_view op) const { return find(op) != nullptr; }

  /// Process-wide registry with the built-in ops already registered.
  static OpRegistry& global();

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const BackwardRule>, std::less<>> rules_;
};

/// Registers `rule` for `op` in the global registry.
void register_custom_grad(const std::string& op, BackwardRule rule);

struct TapeNode {
  std::string op;
  std::vector<Var> inputs;
  SavedContext saved;
  std::shared_ptr<const BackwardRule> rule;  // null: propagates zero gradient
  Tensor value;
  bool requires_grad = false;
  std::string param_name;  // set for trainable leaves
};

using GradMap = std::map<std::string, Tensor>;

/// Append-only record of a forward computation. Node inputs always precede
/// the node, so the tape is acyclic by construction and the reverse sweep is
/// a topological order.
class Tape {
 public:
  explicit Tape(const OpRegistry& registry = OpRegistry::global()) : registry_(&registry) {}

  Var constant(Tensor value);
  /// Trainable leaf; leaves sharing a name accumulate into one gradient.
  Var parameter(std::string name, Tensor value);
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, SavedContext saved = {});

  const Tensor& value(Var v) const { return node(v).value; }
  const TapeNode& node(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// d(loss)/d(parameter) for every parameter on the tape. Parameters not
  /// reachable from the loss receive zeros.
  GradMap backward(Var loss) const;
  /// Gradient of the loss with respect to every node (undefined where zero
  /// or unreachable).
  std::vector<Tensor> backward_nodes(Var loss) const;

 private:
  const OpRegistry* registry_;
  std::vector<TapeNode> nodes_;
};

}  // namespace adaqat
