#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace texmatch {

using Index = std::ptrdiff_t;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

/// Thrown for shape or argument contract violations.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a numeric computation leaves its domain (log of a negative, non-finite loss).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major extents. An empty shape denotes a scalar with one element.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims);
  explicit Shape(std::vector<Index> dims);

  Index rank() const { return static_cast<Index>(dims_.size()); }
  Index numel() const;
  Index operator[](Index axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  const std::vector<Index>& dims() const { return dims_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return dims_ != other.dims_; }

  std::string str() const;

 private:
  std::vector<Index> dims_;
};

namespace detail {

template <typename Scalar>
struct Node {
  Shape shape;
  Array<Scalar> value;
  Array<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }
  Array<Scalar>& ensure_grad() {
    if (grad.size() != value.size()) grad = Array<Scalar>::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

/// Handle to a node of the reverse-mode graph. Copies share storage, which is how
/// a single parameter is read by several branches of a network.
template <typename Scalar>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor constant(const Shape& shape, Scalar value);
  static Tensor from(const Shape& shape, Array<Scalar> values);
  static Tensor from(const Shape& shape, std::initializer_list<Scalar> values);
  /// Leaf that accumulates gradients.
  static Tensor parameter(const Shape& shape, Array<Scalar> values);
  static Tensor scalar(Scalar value) { return constant(Shape{}, value); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  Index numel() const { return node().shape.numel(); }
  Index dim(Index axis) const { return node().shape[axis]; }

  const Array<Scalar>& value() const { return node().value; }
  /// Leaves only: parameters and buffers are updated in place by optimizers and
  /// batch-norm statistics.
  Array<Scalar>& mutable_value();

  bool requires_grad() const { return node().requires_grad; }
  bool has_grad() const { return node().grad.size() == node().value.size(); }
  const Array<Scalar>& grad() const;
  Array<Scalar>& mutable_grad() { return node().ensure_grad(); }
  void zero_grad();
  void clear_grad() { node().grad.resize(0); }

  Scalar item() const;
  Scalar at(std::initializer_list<Index> index) const;

  const char* op_name() const { return node().op; }
  const NodePtr& node_ptr() const { return node_; }
  detail::Node<Scalar>& node() const;

  /// Builds an op result. The graph link and backward rule are kept only when a
  /// parent requires gradients and grad mode is enabled.
  static Tensor make_result(const Shape& shape, Array<Scalar> value, std::vector<Tensor> parents,
                            std::function<void(detail::Node<Scalar>&)> backward, const char* op);

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Disables graph construction for its lifetime (inference).
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

/// Reverse sweep from a one-element loss. Gradients accumulate into leaves; the
/// graph behind `loss` is released afterwards.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

}  // namespace texmatch
