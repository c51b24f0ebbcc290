#include "tagfog/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "tagfog/errors.hpp"

namespace tagfog {

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_sequence{0};

}  // namespace

detail::NodePtr detail::make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(detail::make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(detail::make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(detail::make_node({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->values.size(); }

std::span<const double> Tensor::values() const { return node_->values; }

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf()) {
    throw ContractViolation(std::string("cannot write into the output of op '") + node_->op + "'");
  }
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() requires a single-element tensor, got " + shape_string(shape()));
  }
  return node_->values[0];
}

double Tensor::at(std::size_t i) const {
  if (i >= numel()) throw DimensionError("flat index out of range");
  return node_->values[i];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2 || row >= shape()[0] || col >= shape()[1]) {
    throw DimensionError("index (" + std::to_string(row) + "," + std::to_string(col) +
                         ") invalid for shape " + shape_string(shape()));
  }
  return node_->values[row * shape()[1] + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_vector(shape(), node_->values, false); }

void Tensor::backward() const {
  if (!valid() || numel() != 1) {
    throw ContractViolation("backward() needs a scalar loss, got " +
                            (valid() ? shape_string(shape()) : std::string("an empty tensor")));
  }
  const auto tape = ComputationTape::record(*this);
  if (tape.empty()) {
    throw ContractViolation("backward() called on a loss that depends on no differentiable op");
  }
  tape.replay(*this);
}

const char* Tensor::op_name() const { return node_->op; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

ComputationTape ComputationTape::record(const Tensor& root) {
  ComputationTape tape;
  if (!root.valid()) return tape;

  // Iterative post-order DFS: a node is emitted after all of its inputs.
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && !child->is_leaf() && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    if (!node->is_leaf()) tape.ops_.push_back(node);
    stack.pop_back();
  }

  for (const detail::Node* op : tape.ops_) {
    for (const auto& in : op->inputs) {
      if (in->sequence >= op->sequence) {
        throw ContractViolation(std::string("tape order violated at op '") + op->op + "'");
      }
    }
  }
  return tape;
}

std::size_t ComputationTape::replay(const Tensor& root) const {
  // Intermediate gradients restart from zero on each pass; only leaves accumulate.
  for (detail::Node* op : ops_) {
    op->ensure_grad();
    std::fill(op->grad.begin(), op->grad.end(), 0.0);
  }
  root.node()->ensure_grad()[0] = 1.0;

  std::size_t visited = 0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    detail::Node* op = *it;
    for (const auto& in : op->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    op->backward(*op);
    ++visited;
  }
  return visited;
}

}  // namespace tagfog
