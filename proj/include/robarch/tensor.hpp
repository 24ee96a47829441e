#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace robarch {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Normalization behaviour: batch statistics (Train) or running statistics (Eval).
enum class Mode { Train, Eval };

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& out)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  BackwardFn backward;
  bool consumed = false;  // backward already ran through this node as the loss

  bool wants_grad() const noexcept { return requires_grad; }
};

}  // namespace detail

/// Shared handle to a node of the differentiation graph. Copies alias the same
/// storage; use detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  double item() const;

  bool requires_grad() const;
  /// Turning gradients off releases the gradient buffer; turning them on allocates zeros.
  void set_requires_grad(bool on);
  void zero_grad();

  bool is_leaf() const;
  const char* op() const;

  /// New leaf holding a copy of the values, outside any graph.
  Tensor detach() const;

  detail::Node& node() const;
  const detail::NodePtr& ptr() const noexcept { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/// Fills the gradients of every requires_grad leaf reachable from `loss`.
/// Each graph supports a single backward pass.
void backward(const Tensor& loss);

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Re-enables graph recording inside a NoGradGuard scope (attack generation).
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Creates an op result. The backward closure is attached only when graph
/// recording is on and some parent requires gradients.
Tensor make_result(Shape shape, std::vector<double> values, const char* op, std::vector<Tensor> parents,
                   BackwardFn fn);

}  // namespace detail

}  // namespace robarch
