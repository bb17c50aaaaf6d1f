#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

using Shape = std::vector<std::size_t>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input data violates a precondition (non-finite value, length mismatch,
/// missing class).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tensor;

namespace detail {

// One recorded primitive: the inputs it read and how to push an upstream
// gradient back into them. A null slot in `grads` means that input does not
// need a gradient.
struct Node {
  std::vector<Tensor> inputs;
  std::function<void(const Eigen::VectorXd& upstream, std::vector<Eigen::VectorXd*>& grads)> backward;
  const char* name = "";
};

struct TensorImpl {
  Shape shape;
  Eigen::VectorXd value;
  Eigen::VectorXd grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

}  // namespace detail

/// Dense row-major tensor of doubles with an optional gradient history.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets parameters be captured by recorded operations and receive gradients.
/// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, Eigen::VectorXd values);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
  static Tensor from_matrix(const Eigen::Ref<const RowMatrix>& m);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return static_cast<std::size_t>(impl_->value.size()); }

  const Eigen::VectorXd& values() const { return impl_->value; }
  Eigen::VectorXd& mutable_values() { return impl_->value; }
  double operator[](std::size_t i) const { return impl_->value[static_cast<Eigen::Index>(i)]; }
  double item() const;

  /// Row-major matrix view of a rank-2 tensor.
  ConstRowMap matrix() const;
  RowMap mutable_matrix();

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const { return impl_->has_grad; }
  const Eigen::VectorXd& grad() const;
  void zero_grad();

  bool is_leaf() const { return !impl_->node; }
  Tensor clone() const;
  Tensor detach() const;

  const detail::TensorImpl* id() const { return impl_.get(); }

 private:
  friend Tensor make_result(Shape, Eigen::VectorXd, std::vector<Tensor>, const char*,
                            std::function<void(const Eigen::VectorXd&, std::vector<Eigen::VectorXd*>&)>);
  friend class Tape;
  friend void backward(const Tensor& loss);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Builds the output of a primitive. History is recorded only when at least
/// one input requires a gradient.
Tensor make_result(Shape shape, Eigen::VectorXd value, std::vector<Tensor> inputs, const char* name,
                   std::function<void(const Eigen::VectorXd&, std::vector<Eigen::VectorXd*>&)> backward_fn);

/// Topologically ordered record of the operations that produced a tensor.
class Tape {
 public:
  struct Entry {
    const detail::TensorImpl* tensor;
    std::vector<std::size_t> parents;  // indices into entries()
  };

  static Tape record(const Tensor& root);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
  std::vector<Tensor> handles_;
  friend void backward(const Tensor& loss);
};

/// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
void backward(const Tensor& loss);

}  // namespace ctcn
