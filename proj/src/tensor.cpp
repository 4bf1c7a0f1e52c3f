#include "texmatch/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace texmatch {

Shape::Shape(std::initializer_list<Index> dims) : Shape(std::vector<Index>(dims)) {}

Shape::Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
  for (Index d : dims_) {
    if (d <= 0) throw ShapeError("shape extents must be positive, got " + str());
  }
}

Index Shape::numel() const {
  return std::accumulate(dims_.begin(), dims_.end(), Index{1}, std::multiplies<>());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
detail::Node<Scalar>& Tensor<Scalar>::node() const {
  if (!node_) throw std::logic_error("use of an undefined tensor");
  return *node_;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(const Shape& shape) {
  return from(shape, Array<Scalar>::Zero(shape.numel()));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(const Shape& shape, Scalar value) {
  return from(shape, Array<Scalar>::Constant(shape.numel(), value));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(const Shape& shape, Array<Scalar> values) {
  if (values.size() != shape.numel()) {
    throw ShapeError("element count " + std::to_string(values.size()) + " does not match shape " +
                     shape.str());
  }
  auto node = std::make_shared<detail::Node<Scalar>>();
  node->shape = shape;
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(const Shape& shape, std::initializer_list<Scalar> values) {
  Array<Scalar> a(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) a[i++] = v;
  return from(shape, std::move(a));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::parameter(const Shape& shape, Array<Scalar> values) {
  Tensor t = from(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename Scalar>
Array<Scalar>& Tensor<Scalar>::mutable_value() {
  if (!node().is_leaf()) throw std::logic_error("only leaf tensors may be mutated in place");
  return node().value;
}

template <typename Scalar>
const Array<Scalar>& Tensor<Scalar>::grad() const {
  if (!has_grad()) throw std::logic_error(std::string("tensor has no gradient (op ") + op_name() + ")");
  return node().grad;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  node().ensure_grad().setZero();
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw ShapeError("item() needs a one-element tensor, got " + shape().str());
  return value()[0];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<Index> index) const {
  const auto& dims = shape().dims();
  if (static_cast<std::size_t>(index.size()) != dims.size()) throw ShapeError("index rank mismatch");
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= dims[axis]) throw ShapeError("index out of range");
    flat = flat * dims[axis++] + i;
  }
  return value()[flat];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::make_result(const Shape& shape, Array<Scalar> value,
                                           std::vector<Tensor> parents,
                                           std::function<void(detail::Node<Scalar>&)> backward,
                                           const char* op) {
  Tensor out = from(shape, std::move(value));
  out.node_->op = op;
  if (!grad_mode_enabled()) return out;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->backward = std::move(backward);
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  return out;
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  using Node = detail::Node<Scalar>;
  if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + loss.shape().str());
  if (!loss.requires_grad()) throw std::logic_error("loss does not depend on any parameter");

  // Iterative post-order DFS gives a topological order (parents before children).
  // `order` owns its nodes: releasing a node's parent links below may otherwise
  // free ancestors that are still waiting for their turn.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{loss.node_ptr(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> parent = top.first->parents[top.second++];
      if (parent->requires_grad && seen.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  loss.node().ensure_grad() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = it->get();
    if (node->is_leaf()) continue;
    node->ensure_grad();
    node->backward(*node);
    node->backward = nullptr;
    node->parents.clear();
    node->grad.resize(0);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace texmatch
