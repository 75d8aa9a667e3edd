#include "sfus/nn/autograd.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_set>

namespace sfus::nn {

namespace {
thread_local bool g_grad_enabled = true;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}
}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [](const Var& v) { return v.requires_grad(); });
    if (needs) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss || loss.value().size() != 1) {
    throw ShapeError("backward() needs a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward() on a loss detached from every parameter");
  }
  if (!loss.value().all_finite()) {
    throw NumericalError("backward() on a non-finite loss");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
    }
  }
  for (Node* node : order) {
    if (!node->inputs.empty()) {
      // interior node: release its gradient buffer
      node->grad = Tensor();
    } else if (!node->grad.empty() && !node->grad.all_finite()) {
      throw NumericalError("non-finite gradient reached a parameter");
    }
  }
}

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = true;
}

void Parameter::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

Parameter& ParameterSet::add_uniform(std::string name, Shape shape, std::size_t fan_in,
                                     SeededRng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(t));
}

Parameter& ParameterSet::get(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return *params_[it->second];
}

const Parameter& ParameterSet::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return *params_[it->second];
}

bool ParameterSet::contains(std::string_view name) const { return index_.contains(name); }

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterSet::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p->name().starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

std::vector<const Parameter*> ParameterSet::with_prefix(std::string_view prefix) const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) {
    if (p->name().starts_with(prefix)) out.push_back(p.get());
  }
  return out;
}

std::size_t ParameterSet::count() const { return count_with_prefix({}); }

std::size_t ParameterSet::count_with_prefix(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->name().starts_with(prefix)) n += p->size();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::uint64_t ParameterSet::hash(std::string_view prefix) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    if (!p->name().starts_with(prefix)) continue;
    fnv_bytes(h, p->name().data(), p->name().size());
    for (std::size_t d : p->value().shape()) {
      const auto d64 = static_cast<std::uint64_t>(d);
      fnv_bytes(h, &d64, sizeof d64);
    }
    for (double v : p->value().values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      fnv_bytes(h, &bits, sizeof bits);
    }
  }
  return h;
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value());
  return out;
}

void ParameterSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) {
    throw ShapeError("snapshot has a different parameter count");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i]->value().shape()) {
      throw ShapeError("snapshot shape mismatch for " + params_[i]->name());
    }
    params_[i]->value() = values[i];
  }
}

}  // namespace sfus::nn
