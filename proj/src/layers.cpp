#include "texmatch/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace texmatch {

namespace {

template <typename Scalar>
using Node = detail::Node<Scalar>;

struct Geometry {
  Index channels, height, width;
  Index kh, kw, sh, sw, ph, pw;
  Index out_h, out_w;

  Index rows() const { return channels * kh * kw; }
  Index cols() const { return out_h * out_w; }
};

// Output columns whose input column iw = ow * sw - pw + j lies inside [0, width).
inline std::pair<Index, Index> valid_columns(const Geometry& g, Index j) {
  Index lo = 0;
  if (g.pw - j > 0) lo = (g.pw - j + g.sw - 1) / g.sw;
  Index hi = g.width - 1 + g.pw - j < 0 ? -1 : (g.width - 1 + g.pw - j) / g.sw;
  hi = std::min(hi + 1, g.out_w);
  return {std::min(lo, hi), hi};
}

// Patch matrix: row (c, i, j), column (oh, ow).
template <typename Scalar>
void im2col(const Scalar* x, const Geometry& g, Scalar* col) {
  const Index cols = g.cols();
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = x + c * g.height * g.width;
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        Scalar* dst = col + ((c * g.kh + i) * g.kw + j) * cols;
        const auto [lo, hi] = valid_columns(g, j);
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.sh - g.ph + i;
          Scalar* row = dst + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(row, row + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + ih * g.width + j - g.pw;
          std::fill(row, row + lo, Scalar(0));
          if (g.sw == 1) {
            std::copy(src + lo, src + hi, row + lo);
          } else {
            for (Index ow = lo; ow < hi; ++ow) row[ow] = src[ow * g.sw];
          }
          std::fill(row + hi, row + g.out_w, Scalar(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patches back into the image.
template <typename Scalar>
void col2im(const Scalar* col, const Geometry& g, Scalar* x) {
  const Index cols = g.cols();
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = x + c * g.height * g.width;
    for (Index i = 0; i < g.kh; ++i) {
      for (Index j = 0; j < g.kw; ++j) {
        const Scalar* src = col + ((c * g.kh + i) * g.kw + j) * cols;
        const auto [lo, hi] = valid_columns(g, j);
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.sh - g.ph + i;
          if (ih < 0 || ih >= g.height) continue;
          const Scalar* row = src + oh * g.out_w;
          Scalar* dst = plane + ih * g.width + j - g.pw;
          for (Index ow = lo; ow < hi; ++ow) dst[ow * g.sw] += row[ow];
        }
      }
    }
  }
}

void check_image(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + " expects N x C x H x W input, got " + s.str());
}

void check_weights(const Shape& w, Index first, Index second, const ConvSpec& spec, const char* what) {
  const Shape expected{first, second, spec.kernel.first, spec.kernel.second};
  if (w != expected) {
    throw ShapeError(std::string(what) + " weights " + w.str() + " do not match " + expected.str());
  }
}

}  // namespace

std::pair<Index, Index> ConvSpec::output_extent(Index height, Index width) const {
  const auto [kh, kw] = kernel;
  const auto [sh, sw] = stride;
  const auto [ph, pw] = padding;
  if (kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0 || ph < 0 || pw < 0) throw ShapeError("invalid ConvSpec");
  Index oh, ow;
  if (transposed) {
    oh = (height - 1) * sh - 2 * ph + kh;
    ow = (width - 1) * sw - 2 * pw + kw;
  } else {
    if (height + 2 * ph < kh || width + 2 * pw < kw) throw ShapeError("kernel does not fit padded input");
    oh = (height + 2 * ph - kh) / sh + 1;
    ow = (width + 2 * pw - kw) / sw + 1;
  }
  if (oh < 1 || ow < 1) throw ShapeError("convolution output extent < 1");
  return {oh, ow};
}

template <typename Scalar>
BatchNormState<Scalar> BatchNormState<Scalar>::create(Index channels) {
  BatchNormState s;
  s.gamma = Tensor<Scalar>::parameter(Shape{channels}, Array<Scalar>::Ones(channels));
  s.beta = Tensor<Scalar>::parameter(Shape{channels}, Array<Scalar>::Zero(channels));
  s.running_mean = Tensor<Scalar>::zeros(Shape{channels});
  s.running_var = Tensor<Scalar>::constant(Shape{channels}, Scalar(1));
  return s;
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias,
                      const ConvSpec& spec) {
  check_image(x.shape(), "conv2d");
  if (spec.transposed) throw ShapeError("conv2d given a transposed ConvSpec");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != spec.in_channels) {
    throw ShapeError("conv2d expects " + std::to_string(spec.in_channels) + " input channels, got " +
                     std::to_string(c));
  }
  check_weights(weights.shape(), spec.out_channels, spec.in_channels, spec, "conv2d");
  if (bias.shape() != Shape{spec.out_channels}) throw ShapeError("conv2d bias shape mismatch");
  const auto [oh, ow] = spec.output_extent(h, w);
  const Geometry g{c, h, w, spec.kernel.first, spec.kernel.second, spec.stride.first, spec.stride.second,
                   spec.padding.first, spec.padding.second, oh, ow};
  const Index cout = spec.out_channels, k = g.rows(), p = g.cols();

  Array<Scalar> out(n * cout * p);
  RowMatrix<Scalar> col(k, p);
  ConstMatrixMap<Scalar> wm(weights.value().data(), cout, k);
  const auto b = bias.value().matrix();
  for (Index s = 0; s < n; ++s) {
    im2col(x.value().data() + s * c * h * w, g, col.data());
    MatrixMap<Scalar> y(out.data() + s * cout * p, cout, p);
    y.noalias() = wm * col;
    y.colwise() += b;
  }

  auto back = [g, n, cout](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    Node<Scalar>& pw = *self.parents[1];
    Node<Scalar>& pb = *self.parents[2];
    const Index k = g.rows(), p = g.cols(), in_size = g.channels * g.height * g.width;
    RowMatrix<Scalar> col(k, p), dcol(k, p);
    ConstMatrixMap<Scalar> wm(pw.value.data(), cout, k);
    for (Index s = 0; s < n; ++s) {
      ConstMatrixMap<Scalar> dy(self.grad.data() + s * cout * p, cout, p);
      if (pw.requires_grad) {
        im2col(px.value.data() + s * in_size, g, col.data());
        MatrixMap<Scalar>(pw.ensure_grad().data(), cout, k).noalias() += dy * col.transpose();
      }
      if (pb.requires_grad) pb.ensure_grad().matrix() += dy.rowwise().sum();
      if (px.requires_grad) {
        dcol.noalias() = wm.transpose() * dy;
        col2im(dcol.data(), g, px.ensure_grad().data() + s * in_size);
      }
    }
  };
  return Tensor<Scalar>::make_result(Shape{n, cout, oh, ow}, std::move(out), {x, weights, bias}, back,
                                     "conv2d");
}

template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                                const Tensor<Scalar>& bias, const ConvSpec& spec) {
  check_image(x.shape(), "conv_transpose2d");
  if (!spec.transposed) throw ShapeError("conv_transpose2d given a forward ConvSpec");
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cin != spec.in_channels) {
    throw ShapeError("conv_transpose2d expects " + std::to_string(spec.in_channels) +
                     " input channels, got " + std::to_string(cin));
  }
  check_weights(weights.shape(), spec.in_channels, spec.out_channels, spec, "conv_transpose2d");
  if (bias.shape() != Shape{spec.out_channels}) throw ShapeError("conv_transpose2d bias shape mismatch");
  const auto [oh, ow] = spec.output_extent(h, w);
  // Patch geometry of the *output* image: its im2col grid is the input grid.
  const Geometry g{spec.out_channels, oh, ow, spec.kernel.first, spec.kernel.second, spec.stride.first,
                   spec.stride.second, spec.padding.first, spec.padding.second, h, w};
  const Index cout = spec.out_channels, k = g.rows(), p = g.cols(), out_size = cout * oh * ow;

  Array<Scalar> out = Array<Scalar>::Zero(n * out_size);
  RowMatrix<Scalar> col(k, p);
  ConstMatrixMap<Scalar> wm(weights.value().data(), cin, k);
  for (Index s = 0; s < n; ++s) {
    col.noalias() = wm.transpose() * ConstMatrixMap<Scalar>(x.value().data() + s * cin * p, cin, p);
    Scalar* y = out.data() + s * out_size;
    col2im(col.data(), g, y);
    MatrixMap<Scalar>(y, cout, oh * ow).colwise() += bias.value().matrix();
  }

  auto back = [g, n, cin](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    Node<Scalar>& pw = *self.parents[1];
    Node<Scalar>& pb = *self.parents[2];
    const Index k = g.rows(), p = g.cols(), out_size = g.channels * g.height * g.width;
    RowMatrix<Scalar> col(k, p);
    ConstMatrixMap<Scalar> wm(pw.value.data(), cin, k);
    for (Index s = 0; s < n; ++s) {
      const Scalar* dy = self.grad.data() + s * out_size;
      im2col(dy, g, col.data());
      if (px.requires_grad) {
        MatrixMap<Scalar>(px.ensure_grad().data() + s * cin * p, cin, p).noalias() += wm * col;
      }
      if (pw.requires_grad) {
        MatrixMap<Scalar>(pw.ensure_grad().data(), cin, k).noalias() +=
            ConstMatrixMap<Scalar>(px.value.data() + s * cin * p, cin, p) * col.transpose();
      }
      if (pb.requires_grad) {
        pb.ensure_grad().matrix() +=
            ConstMatrixMap<Scalar>(dy, g.channels, g.height * g.width).rowwise().sum();
      }
    }
  };
  return Tensor<Scalar>::make_result(Shape{n, cout, oh, ow}, std::move(out), {x, weights, bias}, back,
                                     "conv_transpose2d");
}

template <typename Scalar>
Tensor<Scalar> batchnorm2d(const Tensor<Scalar>& x, BatchNormState<Scalar>& state) {
  const Shape& shape = x.shape();
  if (shape.rank() < 2) throw ShapeError("batchnorm2d expects N x C [x ...] input");
  const Index n = shape[0], c = shape[1], spatial = x.numel() / (n * c);
  if (state.gamma.numel() != c) throw ShapeError("batchnorm2d channel count mismatch");
  const bool train = state.mode == Mode::train;
  if (train && n < 2) throw ShapeError("batchnorm2d in train mode needs a batch of at least 2");
  const Index count = n * spatial;

  auto plane = [&](const Array<Scalar>& a, Index s, Index ch) {
    return a.segment((s * c + ch) * spatial, spatial);
  };

  Array<Scalar> mean_c(c), invstd(c);
  const Array<Scalar>& xv = x.value();
  if (train) {
    Array<Scalar> var_c(c);
    for (Index ch = 0; ch < c; ++ch) {
      Scalar acc = 0;
      for (Index s = 0; s < n; ++s) acc += plane(xv, s, ch).sum();
      const Scalar m = acc / Scalar(count);
      Scalar sq = 0;
      for (Index s = 0; s < n; ++s) sq += (plane(xv, s, ch) - m).square().sum();
      mean_c[ch] = m;
      var_c[ch] = sq / Scalar(count);
    }
    invstd = (var_c + state.eps).rsqrt();
    const Scalar unbias = Scalar(count) / Scalar(std::max<Index>(count - 1, 1));
    auto& rm = state.running_mean.mutable_value();
    auto& rv = state.running_var.mutable_value();
    rm = (Scalar(1) - state.momentum) * rm + state.momentum * mean_c;
    rv = (Scalar(1) - state.momentum) * rv + state.momentum * var_c * unbias;
  } else {
    mean_c = state.running_mean.value();
    invstd = (state.running_var.value() + state.eps).rsqrt();
  }

  const Array<Scalar>& gamma = state.gamma.value();
  const Array<Scalar>& beta = state.beta.value();
  auto xhat = std::make_shared<Array<Scalar>>(x.numel());
  Array<Scalar> out(x.numel());
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * spatial;
      xhat->segment(off, spatial) = (xv.segment(off, spatial) - mean_c[ch]) * invstd[ch];
      out.segment(off, spatial) = gamma[ch] * xhat->segment(off, spatial) + beta[ch];
    }
  }

  auto back = [xhat, invstd, n, c, spatial, count, train](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    Node<Scalar>& pg = *self.parents[1];
    Node<Scalar>& pb = *self.parents[2];
    const Array<Scalar>& g = self.grad;
    for (Index ch = 0; ch < c; ++ch) {
      Scalar sum_g = 0, sum_gx = 0;
      for (Index s = 0; s < n; ++s) {
        const Index off = (s * c + ch) * spatial;
        sum_g += g.segment(off, spatial).sum();
        sum_gx += (g.segment(off, spatial) * xhat->segment(off, spatial)).sum();
      }
      if (pg.requires_grad) pg.ensure_grad()[ch] += sum_gx;
      if (pb.requires_grad) pb.ensure_grad()[ch] += sum_g;
      if (!px.requires_grad) continue;
      const Scalar gamma = pg.value[ch];
      auto& dx = px.ensure_grad();
      for (Index s = 0; s < n; ++s) {
        const Index off = (s * c + ch) * spatial;
        if (train) {
          // d/dx of gamma * (x - mean) / sqrt(var + eps) with batch statistics.
          dx.segment(off, spatial) +=
              (gamma * invstd[ch] / Scalar(count)) *
              (Scalar(count) * g.segment(off, spatial) - sum_g - xhat->segment(off, spatial) * sum_gx);
        } else {
          dx.segment(off, spatial) += gamma * invstd[ch] * g.segment(off, spatial);
        }
      }
    }
  };
  return Tensor<Scalar>::make_result(shape, std::move(out), {x, state.gamma, state.beta}, back,
                                     "batchnorm2d");
}

template <typename Scalar>
Tensor<Scalar> prelu(const Tensor<Scalar>& x, const Tensor<Scalar>& slopes) {
  const Shape& shape = x.shape();
  if (shape.rank() < 2) throw ShapeError("prelu expects N x C [x ...] input");
  const Index n = shape[0], c = shape[1], spatial = x.numel() / (n * c);
  if (slopes.numel() != c) throw ShapeError("prelu slope count does not match channels");
  const Array<Scalar>& xv = x.value();
  Array<Scalar> out(x.numel());
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * spatial;
      const Scalar a = slopes.value()[ch];
      auto seg = xv.segment(off, spatial);
      out.segment(off, spatial) = (seg >= Scalar(0)).select(seg, a * seg);
    }
  }
  auto back = [n, c, spatial](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    Node<Scalar>& pa = *self.parents[1];
    const Array<Scalar>& g = self.grad;
    for (Index s = 0; s < n; ++s) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (s * c + ch) * spatial;
        auto seg = px.value.segment(off, spatial);
        auto gs = g.segment(off, spatial);
        const auto neg = seg < Scalar(0);
        if (px.requires_grad) {
          px.ensure_grad().segment(off, spatial) += neg.select(pa.value[ch] * gs, gs);
        }
        if (pa.requires_grad) pa.ensure_grad()[ch] += neg.select(gs * seg, Scalar(0)).sum();
      }
    }
  };
  return Tensor<Scalar>::make_result(shape, std::move(out), {x, slopes}, back, "prelu");
}

template <typename Scalar>
Tensor<Scalar> avgpool2d(const Tensor<Scalar>& x, std::pair<Index, Index> window) {
  check_image(x.shape(), "avgpool2d");
  const auto [wh, ww] = window;
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (wh <= 0 || ww <= 0 || h % wh != 0 || w % ww != 0) {
    throw ShapeError("avgpool2d window " + std::to_string(wh) + "x" + std::to_string(ww) +
                     " does not divide " + x.shape().str());
  }
  const Index oh = h / wh, ow = w / ww, planes = n * c;
  const Scalar inv = Scalar(1) / Scalar(wh * ww);
  Array<Scalar> out = Array<Scalar>::Zero(planes * oh * ow);
  const Scalar* xv = x.value().data();
  for (Index p = 0; p < planes; ++p) {
    for (Index i = 0; i < h; ++i) {
      const Scalar* row = xv + (p * h + i) * w;
      Scalar* dst = out.data() + (p * oh + i / wh) * ow;
      for (Index oj = 0; oj < ow; ++oj) {
        Scalar acc = 0;
        for (Index dj = 0; dj < ww; ++dj) acc += row[oj * ww + dj];
        dst[oj] += acc;
      }
    }
  }
  out *= inv;
  auto back = [planes, h, w, wh, ww, oh, ow, inv](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    if (!px.requires_grad) return;
    Scalar* dx = px.ensure_grad().data();
    for (Index p = 0; p < planes; ++p) {
      for (Index i = 0; i < h; ++i) {
        const Scalar* g = self.grad.data() + (p * oh + i / wh) * ow;
        Scalar* row = dx + (p * h + i) * w;
        for (Index oj = 0; oj < ow; ++oj) {
          const Scalar v = inv * g[oj];
          for (Index dj = 0; dj < ww; ++dj) row[oj * ww + dj] += v;
        }
      }
    }
  };
  return Tensor<Scalar>::make_result(Shape{n, c, oh, ow}, std::move(out), {x}, back, "avgpool2d");
}

template <typename Scalar>
Tensor<Scalar> texture_energy(const Tensor<Scalar>& x) {
  check_image(x.shape(), "texture_energy");
  const Index n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Array<Scalar> out(n * c);
  for (Index p = 0; p < n * c; ++p) out[p] = x.value().segment(p * spatial, spatial).abs().mean();
  auto back = [n, c, spatial](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& dx = px.ensure_grad();
    for (Index p = 0; p < n * c; ++p) {
      dx.segment(p * spatial, spatial) +=
          (self.grad[p] / Scalar(spatial)) * px.value.segment(p * spatial, spatial).sign();
    }
  };
  return Tensor<Scalar>::make_result(Shape{n, c}, std::move(out), {x}, back, "texture_energy");
}

template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                               const Tensor<Scalar>& bias) {
  if (x.shape().rank() != 2 || weights.shape().rank() != 2) throw ShapeError("fully_connected needs 2-D x and weights");
  const Index n = x.dim(0), d = x.dim(1), k = weights.dim(1);
  if (weights.dim(0) != d) {
    throw ShapeError("fully_connected: input " + x.shape().str() + " vs weights " + weights.shape().str());
  }
  if (bias.shape() != Shape{k}) throw ShapeError("fully_connected bias shape mismatch");
  Array<Scalar> out(n * k);
  MatrixMap<Scalar> y(out.data(), n, k);
  y.noalias() = ConstMatrixMap<Scalar>(x.value().data(), n, d) * ConstMatrixMap<Scalar>(weights.value().data(), d, k);
  y.rowwise() += bias.value().matrix().transpose();
  auto back = [n, d, k](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    Node<Scalar>& pw = *self.parents[1];
    Node<Scalar>& pb = *self.parents[2];
    ConstMatrixMap<Scalar> g(self.grad.data(), n, k);
    if (px.requires_grad) {
      MatrixMap<Scalar>(px.ensure_grad().data(), n, d).noalias() +=
          g * ConstMatrixMap<Scalar>(pw.value.data(), d, k).transpose();
    }
    if (pw.requires_grad) {
      MatrixMap<Scalar>(pw.ensure_grad().data(), d, k).noalias() +=
          ConstMatrixMap<Scalar>(px.value.data(), n, d).transpose() * g;
    }
    if (pb.requires_grad) pb.ensure_grad().matrix() += g.colwise().sum().transpose();
  };
  return Tensor<Scalar>::make_result(Shape{n, k}, std::move(out), {x, weights, bias}, back,
                                     "fully_connected");
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  const Array<Scalar>& xv = x.value();
  // exp(-|x|) never overflows; pick the matching branch of the logistic.
  const Array<Scalar> t = (-xv.abs()).exp();
  Array<Scalar> out = (xv >= Scalar(0)).select(Scalar(1) / (Scalar(1) + t), t / (Scalar(1) + t));
  auto back = [](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    if (px.requires_grad) px.ensure_grad() += self.grad * self.value * (Scalar(1) - self.value);
  };
  return Tensor<Scalar>::make_result(x.shape(), std::move(out), {x}, back, "sigmoid");
}

#define TEXMATCH_INSTANTIATE(S)                                                                       \
  template struct BatchNormState<S>;                                                                   \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, const ConvSpec&);    \
  template Tensor<S> conv_transpose2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,            \
                                      const ConvSpec&);                                                \
  template Tensor<S> batchnorm2d(const Tensor<S>&, BatchNormState<S>&);                                \
  template Tensor<S> prelu(const Tensor<S>&, const Tensor<S>&);                                        \
  template Tensor<S> avgpool2d(const Tensor<S>&, std::pair<Index, Index>);                             \
  template Tensor<S> texture_energy(const Tensor<S>&);                                                 \
  template Tensor<S> fully_connected(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);            \
  template Tensor<S> sigmoid(const Tensor<S>&);

TEXMATCH_INSTANTIATE(float)
TEXMATCH_INSTANTIATE(double)

#undef TEXMATCH_INSTANTIATE

}  // namespace texmatch
