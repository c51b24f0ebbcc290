#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tagfog {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

// One value in the computation graph. Non-leaf nodes carry the inputs they
// were computed from and a closure that pushes `grad` into those inputs.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass touches this node
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;
  const char* op = "leaf";
  std::uint64_t sequence = 0;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad();
};

// Validates the shape against the value count and stamps a creation sequence.
NodePtr make_node(Shape shape, std::vector<double> values, bool requires_grad);

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode autodiff.
//
// Tensor is a cheap handle: copies share the underlying node. Operations in
// ops.hpp produce new nodes and, when any input requires a gradient and
// grad mode is enabled, record how to propagate gradients back.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool valid() const { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Writable view of a leaf's values (parameters, inputs). Throws on non-leaf nodes.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // A new leaf holding a copy of the values, disconnected from the graph.
  Tensor detach() const;

  // Reverse pass from this scalar. Leaf gradients accumulate across calls;
  // call zero_grad() on parameters between steps.
  void backward() const;

  const char* op_name() const;
  detail::Node* node() const { return node_.get(); }
  const detail::NodePtr& node_ptr() const { return node_; }

  // Used by ops to construct results.
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Ordered record of the operations reachable from a root, inputs strictly
// before their consumers. Built on demand by backward().
class ComputationTape {
 public:
  static ComputationTape record(const Tensor& root);

  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }
  std::span<detail::Node* const> ops() const { return ops_; }

  // Seeds d(root)/d(root) = 1 and runs every op's backward rule once, in
  // reverse order. Returns the number of ops visited.
  std::size_t replay(const Tensor& root) const;

 private:
  std::vector<detail::Node*> ops_;
};

}  // namespace tagfog
