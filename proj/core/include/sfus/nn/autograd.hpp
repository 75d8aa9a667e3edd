#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/rng.hpp"
#include "sfus/tensor.hpp"

namespace sfus::nn {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One value in the recorded computation graph.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

/// Handle to a graph node. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  /// Constant leaf (never receives gradients).
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t rank() const { return node_->value.rank(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

/// Builds an op result. Inputs and the backward closure are only retained
/// when recording is on and some input needs a gradient.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward);

/// Reverse sweep from a scalar loss. Gradients accumulate into every
/// reachable leaf that requires them.
void backward(const Var& loss);

/// Trainable leaf tensor with a stable name.
class Parameter {
 public:
  Parameter(std::string name, Tensor value);

  const std::string& name() const noexcept { return name_; }
  Var var() const { return Var(node_); }
  Tensor& value() { return node_->value; }
  const Tensor& value() const { return node_->value; }
  Tensor& grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();
  std::size_t size() const { return node_->value.size(); }

 private:
  std::string name_;
  NodePtr node_;
};

/// Ordered, name-addressable collection of parameters owned by one model.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(std::string name, Tensor value);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  Parameter& add_uniform(std::string name, Shape shape, std::size_t fan_in, SeededRng& rng);

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> with_prefix(std::string_view prefix);
  std::vector<const Parameter*> with_prefix(std::string_view prefix) const;

  std::size_t count() const;
  std::size_t count_with_prefix(std::string_view prefix) const;
  std::size_t tensors() const { return params_.size(); }

  void zero_grad();
  /// FNV-1a over names, shapes and the exact value bits.
  std::uint64_t hash(std::string_view prefix = {}) const;

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace sfus::nn
