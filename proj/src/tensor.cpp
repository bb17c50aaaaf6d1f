#include "ctcn/tensor.hpp"

#include <fmt/format.h>

#include <unordered_map>
#include <utility>

namespace ctcn {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
}

}  // namespace

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  impl_->value = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(shape_size(shape)), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, Eigen::VectorXd values) : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  if (static_cast<std::size_t>(values.size()) != shape_size(shape))
    throw DimensionError(fmt::format("tensor data length {} does not match shape {}", values.size(),
                                     shape_string(shape)));
  impl_->value = std::move(values);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), Eigen::Map<const Eigen::VectorXd>(values.begin(),
                                                                  static_cast<Eigen::Index>(values.size()))) {}

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrix>& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.mutable_matrix() = m;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw DimensionError(fmt::format("axis {} out of range for shape {}", axis, shape_string(shape())));
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_string(shape()));
  return impl_->value[0];
}

ConstRowMap Tensor::matrix() const {
  if (rank() != 2) throw DimensionError("matrix view requires rank 2, got " + shape_string(shape()));
  return ConstRowMap(impl_->value.data(), static_cast<Eigen::Index>(impl_->shape[0]),
                     static_cast<Eigen::Index>(impl_->shape[1]));
}

RowMap Tensor::mutable_matrix() {
  if (rank() != 2) throw DimensionError("matrix view requires rank 2, got " + shape_string(shape()));
  return RowMap(impl_->value.data(), static_cast<Eigen::Index>(impl_->shape[0]),
                static_cast<Eigen::Index>(impl_->shape[1]));
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

const Eigen::VectorXd& Tensor::grad() const {
  if (!impl_->has_grad) throw ContractError("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->has_grad = false;
  impl_->grad.resize(0);
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->value);
  t.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return t;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->value); }

Tensor make_result(Shape shape, Eigen::VectorXd value, std::vector<Tensor> inputs, const char* name,
                   std::function<void(const Eigen::VectorXd&, std::vector<Eigen::VectorXd*>&)> backward_fn) {
  Tensor out(std::move(shape), std::move(value));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    auto node = std::make_shared<detail::Node>();
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
    node->name = name;
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
  }
  return out;
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;

  std::unordered_map<const detail::TensorImpl*, std::size_t> index;
  // Iterative post-order DFS; a node is emitted after all of its parents.
  struct Frame {
    Tensor t;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  std::unordered_map<const detail::TensorImpl*, bool> visiting;
  stack.push_back({root, 0});
  visiting[root.id()] = true;
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& node = top.t.impl_->node;
    const std::size_t n_inputs = node ? node->inputs.size() : 0;
    if (top.next_input < n_inputs) {
      const Tensor& in = node->inputs[top.next_input++];
      if (!in.requires_grad() || index.count(in.id()) || visiting.count(in.id())) continue;
      visiting[in.id()] = true;
      stack.push_back({in, 0});
      continue;
    }
    Entry e{top.t.id(), {}};
    if (node)
      for (const auto& in : node->inputs)
        if (in.requires_grad()) e.parents.push_back(index.at(in.id()));
    index[top.t.id()] = tape.entries_.size();
    tape.entries_.push_back(std::move(e));
    tape.handles_.push_back(top.t);
    stack.pop_back();
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;

  Tape tape = Tape::record(loss);
  const std::size_t n = tape.size();
  std::vector<Eigen::VectorXd> grads(n);
  std::unordered_map<const detail::TensorImpl*, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[tape.entries_[i].tensor] = i;
  grads[n - 1] = Eigen::VectorXd::Ones(1);

  for (std::size_t k = n; k-- > 0;) {
    Tensor& t = tape.handles_[k];
    if (grads[k].size() == 0) continue;
    auto& impl = *t.impl_;
    if (!impl.node) {
      if (impl.has_grad) {
        impl.grad += grads[k];
      } else {
        impl.grad = grads[k];
        impl.has_grad = true;
      }
      continue;
    }
    std::vector<Eigen::VectorXd*> slots;
    slots.reserve(impl.node->inputs.size());
    for (const auto& in : impl.node->inputs) {
      if (!in.requires_grad()) {
        slots.push_back(nullptr);
        continue;
      }
      auto& g = grads[index.at(in.id())];
      if (g.size() == 0) g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(in.size()));
      slots.push_back(&g);
    }
    impl.node->backward(grads[k], slots);
    grads[k].resize(0);
  }
}

}  // namespace ctcn
