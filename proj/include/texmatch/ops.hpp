#pragma once

#include "texmatch/tensor.hpp"

#include <vector>

namespace texmatch {

enum class Elementwise { add, sub, mul, div, neg, abs, square, sqrt, exp, log, clampmin };

enum class Reduction { sum, mean };

/// Binary kinds take `b` (equal shape, or one side with a single element which is
/// broadcast). Unary kinds ignore `b`, except clampmin which reads the floor from
/// the single element of `b`. log and sqrt reject negative inputs.
template <typename Scalar>
Tensor<Scalar> elementwise(Elementwise kind, const Tensor<Scalar>& a, const Tensor<Scalar>& b = {});

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Reduces over `axes`; an empty axis list reduces everything to a scalar.
template <typename Scalar>
Tensor<Scalar> reduce(Reduction kind, const Tensor<Scalar>& a, const std::vector<Index>& axes = {});

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, const Shape& shape);

/// Same values, cut from the graph.
template <typename Scalar>
Tensor<Scalar> detach(const Tensor<Scalar>& a);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor);

// Expression-style shorthands.

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(Elementwise::add, a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(Elementwise::sub, a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(Elementwise::mul, a, b);
}
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return elementwise(Elementwise::div, a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) {
  return elementwise(Elementwise::neg, a);
}
template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& a) {
  return elementwise(Elementwise::abs, a);
}
template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  return elementwise(Elementwise::square, a);
}
template <typename Scalar>
Tensor<Scalar> sqrt(const Tensor<Scalar>& a) {
  return elementwise(Elementwise::sqrt, a);
}
template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  return elementwise(Elementwise::exp, a);
}
template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  return elementwise(Elementwise::log, a);
}
template <typename Scalar>
Tensor<Scalar> clampmin(const Tensor<Scalar>& a, Scalar floor) {
  return elementwise(Elementwise::clampmin, a, Tensor<Scalar>::scalar(floor));
}
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a, const std::vector<Index>& axes = {}) {
  return reduce(Reduction::sum, a, axes);
}
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a, const std::vector<Index>& axes = {}) {
  return reduce(Reduction::mean, a, axes);
}

}  // namespace texmatch
