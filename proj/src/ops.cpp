#include "texmatch/ops.hpp"

#include <algorithm>
#include <string>

namespace texmatch {

namespace {

template <typename Scalar>
using Node = detail::Node<Scalar>;

bool is_binary(Elementwise kind) {
  switch (kind) {
    case Elementwise::add:
    case Elementwise::sub:
    case Elementwise::mul:
    case Elementwise::div:
      return true;
    default:
      return false;
  }
}

// Adds `g` into the parent's gradient, summing when the parent was broadcast.
template <typename Scalar, typename Expr>
void accumulate(Node<Scalar>& parent, const Expr& g) {
  if (!parent.requires_grad) return;
  auto& dst = parent.ensure_grad();
  if (dst.size() == 1 && g.size() != 1) {
    dst[0] += g.sum();
  } else {
    dst += g;
  }
}

template <typename Scalar>
Tensor<Scalar> binary(Elementwise kind, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!b.defined()) throw ShapeError("binary elementwise op needs two operands");
  const bool same = a.shape() == b.shape();
  if (!same && a.numel() != 1 && b.numel() != 1) {
    throw ShapeError("elementwise shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  }
  const Shape& shape = (same || b.numel() == 1) ? a.shape() : b.shape();
  const Index n = shape.numel();
  // Broadcast both operands to the output extent; single elements replicate.
  auto expand = [n](const Array<Scalar>& v) -> Array<Scalar> {
    return v.size() == n ? v : Array<Scalar>::Constant(n, v[0]);
  };
  const Array<Scalar> av = expand(a.value());
  const Array<Scalar> bv = expand(b.value());

  Array<Scalar> out;
  const char* name = "";
  switch (kind) {
    case Elementwise::add: out = av + bv; name = "add"; break;
    case Elementwise::sub: out = av - bv; name = "sub"; break;
    case Elementwise::mul: out = av * bv; name = "mul"; break;
    case Elementwise::div: out = av / bv; name = "div"; break;
    default: throw std::logic_error("not a binary op");
  }

  auto back = [kind, n](Node<Scalar>& self) {
    Node<Scalar>& pa = *self.parents[0];
    Node<Scalar>& pb = *self.parents[1];
    const Array<Scalar>& g = self.grad;
    auto val = [n](const Node<Scalar>& p) -> Array<Scalar> {
      return p.value.size() == n ? p.value : Array<Scalar>::Constant(n, p.value[0]);
    };
    switch (kind) {
      case Elementwise::add:
        accumulate(pa, g);
        accumulate(pb, g);
        break;
      case Elementwise::sub:
        accumulate(pa, g);
        accumulate<Scalar>(pb, (-g).eval());
        break;
      case Elementwise::mul:
        if (pa.requires_grad) accumulate<Scalar>(pa, (g * val(pb)).eval());
        if (pb.requires_grad) accumulate<Scalar>(pb, (g * val(pa)).eval());
        break;
      case Elementwise::div: {
        const Array<Scalar> bv = val(pb);
        if (pa.requires_grad) accumulate<Scalar>(pa, (g / bv).eval());
        if (pb.requires_grad) accumulate<Scalar>(pb, (-g * val(pa) / bv.square()).eval());
        break;
      }
      default:
        break;
    }
  };
  return Tensor<Scalar>::make_result(shape, std::move(out), {a, b}, back, name);
}

template <typename Scalar>
Tensor<Scalar> unary(Elementwise kind, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Array<Scalar>& x = a.value();
  Array<Scalar> out;
  const char* name = "";
  Scalar floor = 0;
  switch (kind) {
    case Elementwise::neg: out = -x; name = "neg"; break;
    case Elementwise::abs: out = x.abs(); name = "abs"; break;
    case Elementwise::square: out = x.square(); name = "square"; break;
    case Elementwise::sqrt:
      if ((x < Scalar(0)).any()) throw NumericError("sqrt of a negative value");
      out = x.sqrt();
      name = "sqrt";
      break;
    case Elementwise::exp: out = x.exp(); name = "exp"; break;
    case Elementwise::log:
      if ((x < Scalar(0)).any()) throw NumericError("log of a negative value");
      out = x.log();
      name = "log";
      break;
    case Elementwise::clampmin:
      if (!b.defined() || b.numel() != 1) throw ShapeError("clampmin needs a one-element floor");
      floor = b.value()[0];
      out = x.max(floor);
      name = "clampmin";
      break;
    default:
      throw std::logic_error("not a unary op");
  }

  auto back = [kind, floor](Node<Scalar>& self) {
    Node<Scalar>& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const Array<Scalar>& g = self.grad;
    const Array<Scalar>& x = pa.value;
    auto& dst = pa.ensure_grad();
    switch (kind) {
      case Elementwise::neg: dst -= g; break;
      case Elementwise::abs: dst += g * x.sign(); break;
      case Elementwise::square: dst += Scalar(2) * x * g; break;
      case Elementwise::sqrt: dst += g / (Scalar(2) * self.value); break;
      case Elementwise::exp: dst += g * self.value; break;
      case Elementwise::log: dst += g / x; break;
      case Elementwise::clampmin: dst += (x > floor).select(g, Scalar(0)); break;
      default: break;
    }
  };
  return Tensor<Scalar>::make_result(a.shape(), std::move(out), {a}, back, name);
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> elementwise(Elementwise kind, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return is_binary(kind) ? binary(kind, a, b) : unary(kind, a, b);
}

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2) throw ShapeError("matmul needs 2-D operands");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul inner extent mismatch: " + a.shape().str() + " * " + b.shape().str());
  }
  Array<Scalar> out(m * n);
  MatrixMap<Scalar>(out.data(), m, n).noalias() =
      ConstMatrixMap<Scalar>(a.value().data(), m, k) * ConstMatrixMap<Scalar>(b.value().data(), k, n);

  auto back = [m, k, n](Node<Scalar>& self) {
    Node<Scalar>& pa = *self.parents[0];
    Node<Scalar>& pb = *self.parents[1];
    ConstMatrixMap<Scalar> g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      MatrixMap<Scalar>(pa.ensure_grad().data(), m, k).noalias() +=
          g * ConstMatrixMap<Scalar>(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MatrixMap<Scalar>(pb.ensure_grad().data(), k, n).noalias() +=
          ConstMatrixMap<Scalar>(pa.value.data(), m, k).transpose() * g;
    }
  };
  return Tensor<Scalar>::make_result(Shape{m, n}, std::move(out), {a, b}, back, "matmul");
}

template <typename Scalar>
Tensor<Scalar> reduce(Reduction kind, const Tensor<Scalar>& a, const std::vector<Index>& axes) {
  const auto& dims = a.shape().dims();
  const Index rank = a.shape().rank();
  std::vector<bool> reduced(static_cast<std::size_t>(rank), axes.empty());
  for (Index axis : axes) {
    if (axis < 0 || axis >= rank) {
      throw ShapeError("reduce axis " + std::to_string(axis) + " invalid for shape " + a.shape().str());
    }
    reduced[static_cast<std::size_t>(axis)] = true;
  }

  const Scalar full_factor = kind == Reduction::mean ? Scalar(1) / Scalar(a.numel()) : Scalar(1);
  if (std::all_of(reduced.begin(), reduced.end(), [](bool r) { return r; })) {
    Array<Scalar> out(1);
    out[0] = a.value().sum() * full_factor;
    auto back = [full_factor](Node<Scalar>& self) {
      Node<Scalar>& pa = *self.parents[0];
      if (pa.requires_grad) pa.ensure_grad() += full_factor * self.grad[0];
    };
    return Tensor<Scalar>::make_result(Shape{}, std::move(out), {a}, back, kind == Reduction::mean ? "mean" : "sum");
  }

  std::vector<Index> out_dims;
  for (Index i = 0; i < rank; ++i) {
    if (!reduced[static_cast<std::size_t>(i)]) out_dims.push_back(dims[static_cast<std::size_t>(i)]);
  }
  const Shape out_shape(out_dims);
  const Index count = a.numel() / out_shape.numel();

  // Output flat index for every input element, via the strides of kept axes.
  std::vector<Index> out_stride(static_cast<std::size_t>(rank), 0);
  for (Index i = rank - 1, s = 1; i >= 0; --i) {
    if (!reduced[static_cast<std::size_t>(i)]) {
      out_stride[static_cast<std::size_t>(i)] = s;
      s *= dims[static_cast<std::size_t>(i)];
    }
  }
  auto target = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(a.numel()));
  std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
  for (Index flat = 0; flat < a.numel(); ++flat) {
    Index t = 0;
    for (Index i = 0; i < rank; ++i) t += idx[static_cast<std::size_t>(i)] * out_stride[static_cast<std::size_t>(i)];
    (*target)[static_cast<std::size_t>(flat)] = t;
    for (Index i = rank - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < dims[static_cast<std::size_t>(i)]) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }

  Array<Scalar> out = Array<Scalar>::Zero(out_shape.numel());
  const Array<Scalar>& x = a.value();
  for (Index flat = 0; flat < a.numel(); ++flat) out[(*target)[static_cast<std::size_t>(flat)]] += x[flat];
  const Scalar factor = kind == Reduction::mean ? Scalar(1) / Scalar(count) : Scalar(1);
  if (kind == Reduction::mean) out *= factor;

  auto back = [target, factor](Node<Scalar>& self) {
    Node<Scalar>& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    auto& dst = pa.ensure_grad();
    for (Index flat = 0; flat < dst.size(); ++flat) {
      dst[flat] += factor * self.grad[(*target)[static_cast<std::size_t>(flat)]];
    }
  };
  return Tensor<Scalar>::make_result(out_shape, std::move(out), {a}, back,
                                     kind == Reduction::mean ? "mean" : "sum");
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, const Shape& shape) {
  if (shape.numel() != a.numel()) {
    throw ShapeError("cannot reshape " + a.shape().str() + " to " + shape.str());
  }
  auto back = [](Node<Scalar>& self) {
    Node<Scalar>& pa = *self.parents[0];
    if (pa.requires_grad) pa.ensure_grad() += self.grad;
  };
  return Tensor<Scalar>::make_result(shape, a.value(), {a}, back, "reshape");
}

template <typename Scalar>
Tensor<Scalar> detach(const Tensor<Scalar>& a) {
  return Tensor<Scalar>::from(a.shape(), a.value());
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  auto back = [factor](Node<Scalar>& self) {
    Node<Scalar>& pa = *self.parents[0];
    if (pa.requires_grad) pa.ensure_grad() += factor * self.grad;
  };
  return Tensor<Scalar>::make_result(a.shape(), a.value() * factor, {a}, back, "scale");
}

#define TEXMATCH_INSTANTIATE(S)                                                                 \
  template Tensor<S> elementwise(Elementwise, const Tensor<S>&, const Tensor<S>&);               \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> reduce(Reduction, const Tensor<S>&, const std::vector<Index>&);             \
  template Tensor<S> reshape(const Tensor<S>&, const Shape&);                                    \
  template Tensor<S> detach(const Tensor<S>&);                                                   \
  template Tensor<S> scale(const Tensor<S>&, S);

TEXMATCH_INSTANTIATE(float)
TEXMATCH_INSTANTIATE(double)

#undef TEXMATCH_INSTANTIATE

}  // namespace texmatch
