#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qrestore {

class Rng;

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the autodiff graph. Owns the forward value, the accumulated
// gradient (allocated lazily) and a closure that pushes the node's gradient
// to its parents. Nodes are created in topological order, so replaying the
// tape by descending sequence number is a valid reverse sweep.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // null for leaves

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  // Gradient buffer, zero-initialised on first use.
  std::vector<double>& grad_buffer();
  void accumulate_grad(const double* g, size_t n);
};

// Handle to a TensorNode. Copies share the node. Treat the value as
// immutable once the tensor has been consumed by an op; parameters are
// mutated in place only between optimisation steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  // Uniform in [lo, hi).
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim() const { return static_cast<int>(node_->shape.size()); }
  int64_t size(int axis) const { return node_->shape[axis]; }
  int64_t numel() const { return node_->numel(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> data_mut() { return node_->value; }
  double item() const;  // throws unless numel() == 1

  bool requires_grad() const { return node_->requires_grad; }
  // Valid on leaves only (no recorded history).
  void set_requires_grad(bool v);
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // Value copy detached from any history.
  Tensor detach() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Builds the result node of an op: decides requires_grad from the inputs and
// the no-grad flag, and records parents + the backward closure when needed.
// The closure must check parent->requires_grad before accumulating.
Tensor make_op_result(Shape shape, std::vector<double> value,
                      const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backprop);

// The ordered reverse sweep for one root: every node reachable through
// parent links that requires grad, in descending creation order.
struct Tape {
  std::vector<std::shared_ptr<TensorNode>> nodes;
  static Tape trace(const Tensor& root);
};

// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and runs
// every recorded closure once. Gradients accumulate into .grad buffers.
void backward(const Tensor& root);

bool grad_enabled();

// RAII guard: ops created while alive record no history.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace qrestore
