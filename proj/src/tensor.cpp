#include "qrestore/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "qrestore/rng.hpp"

namespace qrestore {

namespace {
std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value,
                                      bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}
}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

void TensorNode::accumulate_grad(const double* g, size_t n) {
  auto& buf = grad_buffer();
  for (size_t i = 0; i < n; ++i) buf[i] += g[i];
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return Tensor(
      make_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(make_node(Shape{}, std::vector<double>{v}, requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("from_data: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  const int64_t n = shape_numel(shape);
  std::vector<double> v(n);
  for (int64_t i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return Tensor(make_node(std::move(shape), std::move(v), requires_grad));
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item: tensor has " + std::to_string(numel()) +
                                " elements, expected 1");
  return node_->value[0];
}

void Tensor::set_requires_grad(bool v) {
  if (node_->backprop)
    throw std::logic_error(
        "set_requires_grad: only valid on leaf tensors without history");
  node_->requires_grad = v;
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty())
    throw std::logic_error("grad: no gradient has been accumulated");
  return node_->grad;
}

std::span<double> Tensor::grad_mut() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(make_node(node_->shape, node_->value, false));
}

Tensor make_op_result(Shape shape, std::vector<double> value,
                      const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backprop) {
  bool needs = false;
  if (g_grad_enabled)
    for (const auto& in : inputs)
      if (in.requires_grad()) {
        needs = true;
        break;
      }
  auto n = make_node(std::move(shape), std::move(value), needs);
  if (needs) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs)
      if (in.requires_grad()) n->parents.push_back(in.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

Tape Tape::trace(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::shared_ptr<TensorNode>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& p : n->parents)
      if (seen.insert(p.get()).second) stack.push_back(p);
    tape.nodes.push_back(std::move(n));
  }
  std::sort(tape.nodes.begin(), tape.nodes.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });
  return tape;
}

void backward(const Tensor& root) {
  if (root.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                shape_str(root.shape()));
  if (!root.requires_grad())
    throw std::logic_error("backward: root does not require grad");
  Tape tape = Tape::trace(root);
  root.node()->grad_buffer()[0] += 1.0;
  for (auto& n : tape.nodes)
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace qrestore
