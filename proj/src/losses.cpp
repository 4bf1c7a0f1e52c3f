#include "texmatch/losses.hpp"

#include "texmatch/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace texmatch {

namespace {

template <typename Scalar>
using Node = detail::Node<Scalar>;

// Separable Gaussian filter over the valid region of an H x W plane.
template <typename Scalar>
class GaussianWindow {
 public:
  GaussianWindow(Index size, double sigma) : size_(size), taps_(size) {
    const double r = static_cast<double>(size / 2);
    double total = 0;
    for (Index i = 0; i < size; ++i) {
      const double d = static_cast<double>(i) - r;
      const double v = std::exp(-d * d / (2.0 * sigma * sigma));
      taps_[static_cast<std::size_t>(i)] = v;
      total += v;
    }
    for (auto& t : taps_) t /= total;
  }

  Index size() const { return size_; }

  void apply(const Scalar* x, Index h, Index w, Scalar* out, std::vector<Scalar>& tmp) const {
    const Index ow = w - size_ + 1, oh = h - size_ + 1;
    tmp.assign(static_cast<std::size_t>(h * ow), Scalar(0));
    for (Index i = 0; i < h; ++i) {
      for (Index k = 0; k < size_; ++k) {
        const Scalar t = Scalar(taps_[static_cast<std::size_t>(k)]);
        const Scalar* src = x + i * w + k;
        Scalar* dst = tmp.data() + i * ow;
        for (Index j = 0; j < ow; ++j) dst[j] += t * src[j];
      }
    }
    std::fill(out, out + oh * ow, Scalar(0));
    for (Index i = 0; i < oh; ++i) {
      for (Index k = 0; k < size_; ++k) {
        const Scalar t = Scalar(taps_[static_cast<std::size_t>(k)]);
        const Scalar* src = tmp.data() + (i + k) * ow;
        Scalar* dst = out + i * ow;
        for (Index j = 0; j < ow; ++j) dst[j] += t * src[j];
      }
    }
  }

  // Adjoint of apply(): scatters a valid-region map back onto the plane (adds into x).
  void apply_adjoint(const Scalar* m, Index h, Index w, Scalar* x, std::vector<Scalar>& tmp) const {
    const Index ow = w - size_ + 1, oh = h - size_ + 1;
    tmp.assign(static_cast<std::size_t>(h * ow), Scalar(0));
    for (Index i = 0; i < oh; ++i) {
      for (Index k = 0; k < size_; ++k) {
        const Scalar t = Scalar(taps_[static_cast<std::size_t>(k)]);
        const Scalar* src = m + i * ow;
        Scalar* dst = tmp.data() + (i + k) * ow;
        for (Index j = 0; j < ow; ++j) dst[j] += t * src[j];
      }
    }
    for (Index i = 0; i < h; ++i) {
      for (Index k = 0; k < size_; ++k) {
        const Scalar t = Scalar(taps_[static_cast<std::size_t>(k)]);
        const Scalar* src = tmp.data() + i * ow;
        Scalar* dst = x + i * w + k;
        for (Index j = 0; j < ow; ++j) dst[j] += t * src[j];
      }
    }
  }

 private:
  Index size_;
  std::vector<double> taps_;
};

struct PlaneGeometry {
  Index planes, height, width, out_h, out_w;
  Index valid() const { return out_h * out_w; }
};

template <typename Scalar>
PlaneGeometry ssim_geometry(const Tensor<Scalar>& x, const Tensor<Scalar>& y, const LossConfig& cfg) {
  cfg.validate();
  if (x.shape() != y.shape()) throw ShapeError("ssim: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  if (x.shape().rank() != 4) throw ShapeError("ssim expects N x C x H x W images");
  const Index h = x.dim(2), w = x.dim(3);
  if (cfg.ssim_window > h || cfg.ssim_window > w) {
    throw ShapeError("ssim window " + std::to_string(cfg.ssim_window) + " exceeds image " + x.shape().str());
  }
  return {x.dim(0) * x.dim(1), h, w, h - cfg.ssim_window + 1, w - cfg.ssim_window + 1};
}

// Filtered moments of one plane pair: mu_x, mu_y, E[x^2], E[y^2], E[xy].
template <typename Scalar>
struct Moments {
  Array<Scalar> mx, my, exx, eyy, exy;
};

template <typename Scalar>
Moments<Scalar> moments(const Scalar* x, const Scalar* y, const PlaneGeometry& g, const GaussianWindow<Scalar>& win,
                        std::vector<Scalar>& tmp) {
  const Index hw = g.height * g.width, v = g.valid();
  Moments<Scalar> m{Array<Scalar>(v), Array<Scalar>(v), Array<Scalar>(v), Array<Scalar>(v), Array<Scalar>(v)};
  Eigen::Map<const Array<Scalar>> xa(x, hw), ya(y, hw);
  const Array<Scalar> xx = xa.square(), yy = ya.square(), xy = xa * ya;
  win.apply(x, g.height, g.width, m.mx.data(), tmp);
  win.apply(y, g.height, g.width, m.my.data(), tmp);
  win.apply(xx.data(), g.height, g.width, m.exx.data(), tmp);
  win.apply(yy.data(), g.height, g.width, m.eyy.data(), tmp);
  win.apply(xy.data(), g.height, g.width, m.exy.data(), tmp);
  return m;
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (ssim_window < 1 || ssim_window % 2 == 0) throw std::invalid_argument("ssim_window must be odd and positive");
  if (!(ssim_sigma > 0.0)) throw std::invalid_argument("ssim_sigma must be positive");
  if (!(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) throw std::invalid_argument("ssim constants must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be non-negative");
}

template <typename Scalar>
Tensor<Scalar> ssim_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& y, const LossConfig& cfg) {
  const PlaneGeometry g = ssim_geometry(x, y, cfg);
  auto win = std::make_shared<GaussianWindow<Scalar>>(cfg.ssim_window, cfg.ssim_sigma);
  const Scalar c1 = Scalar(cfg.ssim_c1), c2 = Scalar(cfg.ssim_c2);
  const Index hw = g.height * g.width, v = g.valid();

  // Per-plane partial derivatives of the SSIM map w.r.t. the five moments.
  struct Partials {
    Array<Scalar> d_mx, d_my, d_exx, d_eyy, d_exy;
  };
  auto partials = std::make_shared<std::vector<Partials>>();
  const bool keep = grad_mode_enabled() && (x.requires_grad() || y.requires_grad());
  if (keep) partials->reserve(static_cast<std::size_t>(g.planes));

  std::vector<Scalar> tmp;
  double total = 0;
  for (Index p = 0; p < g.planes; ++p) {
    const auto m = moments(x.value().data() + p * hw, y.value().data() + p * hw, g, *win, tmp);
    const Array<Scalar> a1 = Scalar(2) * m.mx * m.my + c1;
    const Array<Scalar> a2 = Scalar(2) * (m.exy - m.mx * m.my) + c2;
    const Array<Scalar> b1 = m.mx.square() + m.my.square() + c1;
    const Array<Scalar> b2 = (m.exx - m.mx.square()) + (m.eyy - m.my.square()) + c2;
    const Array<Scalar> s = (a1 * a2) / (b1 * b2);
    total += static_cast<double>(s.sum());
    if (keep) {
      const Array<Scalar> inv = (b1 * b2).inverse();
      const Array<Scalar> s_b1 = s / b1, s_b2 = s / b2;
      Partials d;
      d.d_mx = Scalar(2) * (m.my * (a2 - a1) * inv - m.mx * s_b1 + m.mx * s_b2);
      d.d_my = Scalar(2) * (m.mx * (a2 - a1) * inv - m.my * s_b1 + m.my * s_b2);
      d.d_exx = -s_b2;
      d.d_eyy = -s_b2;
      d.d_exy = Scalar(2) * a1 * inv;
      partials->push_back(std::move(d));
    }
  }
  const double count = static_cast<double>(g.planes * v);
  Array<Scalar> out(1);
  out[0] = Scalar(1.0 - total / count);

  auto back = [g, win, partials, count](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    Node<Scalar>& py = *self.parents[1];
    const Scalar up = Scalar(-static_cast<double>(self.grad[0]) / count);
    const Index hw = g.height * g.width;
    std::vector<Scalar> tmp;
    Array<Scalar> f_m(hw), f_sq(hw), f_xy(hw);
    for (Index p = 0; p < g.planes; ++p) {
      const Partials& d = (*partials)[static_cast<std::size_t>(p)];
      Eigen::Map<const Array<Scalar>> xa(px.value.data() + p * hw, hw), ya(py.value.data() + p * hw, hw);
      f_xy.setZero();
      const Array<Scalar> t_xy = up * d.d_exy;
      win->apply_adjoint(t_xy.data(), g.height, g.width, f_xy.data(), tmp);
      auto side = [&](Node<Scalar>& node, const Array<Scalar>& d_mu, const Array<Scalar>& d_sq,
                      const Eigen::Map<const Array<Scalar>>& self_v, const Eigen::Map<const Array<Scalar>>& other_v) {
        if (!node.requires_grad) return;
        f_m.setZero();
        f_sq.setZero();
        const Array<Scalar> t_mu = up * d_mu, t_sq = up * d_sq;
        win->apply_adjoint(t_mu.data(), g.height, g.width, f_m.data(), tmp);
        win->apply_adjoint(t_sq.data(), g.height, g.width, f_sq.data(), tmp);
        node.ensure_grad().segment(p * hw, hw) += f_m + Scalar(2) * self_v * f_sq + other_v * f_xy;
      };
      side(px, d.d_mx, d.d_exx, xa, ya);
      side(py, d.d_my, d.d_eyy, ya, xa);
    }
  };
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {x, y}, back, "ssim_loss");
}

template <typename Scalar>
double ssim(const Tensor<Scalar>& x, const Tensor<Scalar>& y, const LossConfig& cfg) {
  NoGradGuard guard;
  return 1.0 - static_cast<double>(ssim_loss(x, y, cfg).item());
}

template <typename Scalar>
Tensor<Scalar> gram(const Tensor<Scalar>& x, bool normalize) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[1] != 1) throw ShapeError("gram expects N x 1 x H x W images, got " + s.str());
  const Index n = s[0], h = s[2], w = s[3];
  const Scalar factor = normalize ? Scalar(1) / Scalar(w) : Scalar(1);
  Array<Scalar> out(n * h * h);
  for (Index i = 0; i < n; ++i) {
    ConstMatrixMap<Scalar> m(x.value().data() + i * h * w, h, w);
    MatrixMap<Scalar>(out.data() + i * h * h, h, h).noalias() = factor * (m * m.transpose());
  }
  auto back = [n, h, w, factor](Node<Scalar>& self) {
    Node<Scalar>& px = *self.parents[0];
    if (!px.requires_grad) return;
    for (Index i = 0; i < n; ++i) {
      ConstMatrixMap<Scalar> g(self.grad.data() + i * h * h, h, h);
      ConstMatrixMap<Scalar> m(px.value.data() + i * h * w, h, w);
      MatrixMap<Scalar>(px.ensure_grad().data() + i * h * w, h, w).noalias() +=
          factor * ((g + g.transpose()) * m);
    }
  };
  return Tensor<Scalar>::make_result(Shape{n, h, h}, std::move(out), {x}, back, "gram");
}

template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  return mean(square(a - b));
}

template <typename Scalar>
Tensor<Scalar> relational_loss(const Tensor<Scalar>& target, const Tensor<Scalar>& reconstruction,
                               const LossConfig& cfg) {
  cfg.validate();
  if (target.shape() != reconstruction.shape()) {
    throw ShapeError("relational_loss: shape mismatch " + target.shape().str() + " vs " +
                     reconstruction.shape().str());
  }
  const Tensor<Scalar> reconstruction_term = ssim_loss(target, reconstruction, cfg);
  const Tensor<Scalar> relation_term =
      mse_loss(gram(target, cfg.gram_normalize), gram(reconstruction, cfg.gram_normalize));
  return scale(reconstruction_term, Scalar(cfg.alpha)) + scale(relation_term, Scalar(1.0 - cfg.alpha));
}

template <typename Scalar>
Tensor<Scalar> denoising_relational_loss(const Tensor<Scalar>& target,
                                         const Tensor<Scalar>& reconstruction_from_noisy,
                                         const LossConfig& cfg) {
  return relational_loss(target, reconstruction_from_noisy, cfg);
}

template <typename Scalar>
Tensor<Scalar> corrupt(const Tensor<Scalar>& images, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("corruption sigma must be non-negative");
  if (sigma == 0.0) return Tensor<Scalar>::from(images.shape(), images.value());
  Array<Scalar> out = images.value();
  for (Index i = 0; i < out.size(); ++i) out[i] += Scalar(sigma * rng.normal());
  return Tensor<Scalar>::from(images.shape(), std::move(out));
}

template <typename Scalar>
Tensor<Scalar> bce_loss(const Tensor<Scalar>& scores, const Tensor<Scalar>& targets) {
  if (scores.numel() != targets.numel()) throw ShapeError("bce: score/target count mismatch");
  const Index n = scores.numel();
  const Scalar lo = Scalar(kBceClamp), hi = Scalar(1) - Scalar(kBceClamp);
  const Array<Scalar> s = scores.value().max(lo).min(hi);
  const Array<Scalar>& y = targets.value();
  Array<Scalar> out(1);
  out[0] = -(y * s.log() + (Scalar(1) - y) * (Scalar(1) - s).log()).mean();
  auto back = [n, lo, hi](Node<Scalar>& self) {
    Node<Scalar>& ps = *self.parents[0];
    if (!ps.requires_grad) return;
    const Array<Scalar>& raw = ps.value;
    const Array<Scalar>& y = self.parents[1]->value;
    const Array<Scalar> s = raw.max(lo).min(hi);
    const Array<Scalar> d = (self.grad[0] / Scalar(n)) * ((Scalar(1) - y) / (Scalar(1) - s) - y / s);
    ps.ensure_grad() += (raw > lo && raw < hi).select(d, Scalar(0));
  };
  return Tensor<Scalar>::make_result(Shape{}, std::move(out), {scores, targets}, back, "bce_loss");
}

#define TEXMATCH_INSTANTIATE(S)                                                                     \
  template Tensor<S> ssim_loss(const Tensor<S>&, const Tensor<S>&, const LossConfig&);               \
  template double ssim(const Tensor<S>&, const Tensor<S>&, const LossConfig&);                       \
  template Tensor<S> gram(const Tensor<S>&, bool);                                                   \
  template Tensor<S> mse_loss(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> relational_loss(const Tensor<S>&, const Tensor<S>&, const LossConfig&);         \
  template Tensor<S> denoising_relational_loss(const Tensor<S>&, const Tensor<S>&, const LossConfig&); \
  template Tensor<S> corrupt(const Tensor<S>&, double, Rng&);                                        \
  template Tensor<S> bce_loss(const Tensor<S>&, const Tensor<S>&);

TEXMATCH_INSTANTIATE(float)
TEXMATCH_INSTANTIATE(double)

#undef TEXMATCH_INSTANTIATE

}  // namespace texmatch
