#include "texmatch/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace texmatch::reference {

namespace {

std::size_t at4(Index a, Index b, Index c, Index d, Index B, Index C, Index D) {
  return static_cast<std::size_t>(((a * B + b) * C + c) * D + d);
}

}  // namespace

Vec matmul(const Vec& a, const Vec& b, Index n, Index k, Index m) {
  Vec out(static_cast<std::size_t>(n * m), 0.0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      double s = 0;
      for (Index p = 0; p < k; ++p) s += a[static_cast<std::size_t>(i * k + p)] * b[static_cast<std::size_t>(p * m + j)];
      out[static_cast<std::size_t>(i * m + j)] = s;
    }
  }
  return out;
}

Vec conv2d(const Vec& x, const Vec& w, const Vec& bias, Index n, Index c, Index h, Index wd, Index o, Index kh,
           Index kw, Index sh, Index sw, Index ph, Index pw) {
  const Index oh = (h + 2 * ph - kh) / sh + 1, ow = (wd + 2 * pw - kw) / sw + 1;
  Vec out(static_cast<std::size_t>(n * o * oh * ow), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index f = 0; f < o; ++f)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          double s = bias[static_cast<std::size_t>(f)];
          for (Index ch = 0; ch < c; ++ch)
            for (Index u = 0; u < kh; ++u)
              for (Index v = 0; v < kw; ++v) {
                const Index y = i * sh - ph + u, xx = j * sw - pw + v;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                s += x[at4(b, ch, y, xx, c, h, wd)] * w[at4(f, ch, u, v, c, kh, kw)];
              }
          out[at4(b, f, i, j, o, oh, ow)] = s;
        }
  return out;
}

Vec conv_transpose2d(const Vec& x, const Vec& w, const Vec& bias, Index n, Index c, Index h, Index wd, Index o,
                     Index kh, Index kw, Index sh, Index sw, Index ph, Index pw) {
  const Index oh = (h - 1) * sh - 2 * ph + kh, ow = (wd - 1) * sw - 2 * pw + kw;
  Vec out(static_cast<std::size_t>(n * o * oh * ow), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index f = 0; f < o; ++f)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) out[at4(b, f, i, j, o, oh, ow)] = bias[static_cast<std::size_t>(f)];
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < wd; ++j)
          for (Index f = 0; f < o; ++f)
            for (Index u = 0; u < kh; ++u)
              for (Index v = 0; v < kw; ++v) {
                const Index y = i * sh - ph + u, xx = j * sw - pw + v;
                if (y < 0 || y >= oh || xx < 0 || xx >= ow) continue;
                out[at4(b, f, y, xx, o, oh, ow)] += x[at4(b, ch, i, j, c, h, wd)] * w[at4(ch, f, u, v, o, kh, kw)];
              }
  return out;
}

Vec mean_axis(const Vec& a, const std::vector<Index>& shape, Index axis) {
  Index outer = 1, inner = 1;
  for (Index i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) inner *= shape[static_cast<std::size_t>(i)];
  const Index len = shape[static_cast<std::size_t>(axis)];
  Vec out(static_cast<std::size_t>(outer * inner), 0.0);
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      double s = 0;
      for (Index l = 0; l < len; ++l) s += a[static_cast<std::size_t>((o * len + l) * inner + i)];
      out[static_cast<std::size_t>(o * inner + i)] = s / static_cast<double>(len);
    }
  return out;
}

Vec texture_energy(const Vec& x, Index n, Index c, Index h, Index w) {
  Vec out(static_cast<std::size_t>(n * c), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      double s = 0;
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) s += std::fabs(x[at4(b, ch, i, j, c, h, w)]);
      out[static_cast<std::size_t>(b * c + ch)] = s / static_cast<double>(h * w);
    }
  return out;
}

double ssim(const Vec& x, const Vec& y, Index planes, Index h, Index w, Index window, double sigma, double c1,
            double c2) {
  const Index r = window / 2;
  std::vector<double> g(static_cast<std::size_t>(window * window));
  double z = 0;
  for (Index u = 0; u < window; ++u)
    for (Index v = 0; v < window; ++v) {
      const double du = static_cast<double>(u - r), dv = static_cast<double>(v - r);
      const double e = std::exp(-(du * du + dv * dv) / (2 * sigma * sigma));
      g[static_cast<std::size_t>(u * window + v)] = e;
      z += e;
    }
  for (auto& e : g) e /= z;

  double total = 0;
  Index count = 0;
  for (Index p = 0; p < planes; ++p)
    for (Index i = 0; i + window <= h; ++i)
      for (Index j = 0; j + window <= w; ++j) {
        double mx = 0, my = 0;
        for (Index u = 0; u < window; ++u)
          for (Index v = 0; v < window; ++v) {
            const double gw = g[static_cast<std::size_t>(u * window + v)];
            const std::size_t k = static_cast<std::size_t>((p * h + i + u) * w + j + v);
            mx += gw * x[k];
            my += gw * y[k];
          }
        double vx = 0, vy = 0, cxy = 0;
        for (Index u = 0; u < window; ++u)
          for (Index v = 0; v < window; ++v) {
            const double gw = g[static_cast<std::size_t>(u * window + v)];
            const std::size_t k = static_cast<std::size_t>((p * h + i + u) * w + j + v);
            vx += gw * (x[k] - mx) * (x[k] - mx);
            vy += gw * (y[k] - my) * (y[k] - my);
            cxy += gw * (x[k] - mx) * (y[k] - my);
          }
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return total / static_cast<double>(count);
}

Vec gram(const Vec& x, Index n, Index h, Index w, bool normalize) {
  Vec out(static_cast<std::size_t>(n * h * h), 0.0);
  for (Index b = 0; b < n; ++b)
    for (Index i = 0; i < h; ++i)
      for (Index k = 0; k < h; ++k) {
        double s = 0;
        for (Index j = 0; j < w; ++j) {
          s += x[static_cast<std::size_t>((b * h + i) * w + j)] * x[static_cast<std::size_t>((b * h + k) * w + j)];
        }
        out[static_cast<std::size_t>((b * h + i) * h + k)] = normalize ? s / static_cast<double>(w) : s;
      }
  return out;
}

Vec adam_quadratic(double w0, double target, int steps, double lr, double beta1, double beta2, double eps) {
  Vec traj;
  double w = w0, m = 0, v = 0;
  for (int t = 1; t <= steps; ++t) {
    const double g = 2 * (w - target);
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double mhat = m / (1 - std::pow(beta1, t));
    const double vhat = v / (1 - std::pow(beta2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
    traj.push_back(w);
  }
  return traj;
}

namespace {

struct Counts {
  double far, frr;
};

Counts count_at(const ScoreSet& s, double t) {
  std::size_t fa = 0, fr = 0;
  for (double v : s.imposter) fa += v < t ? 1 : 0;
  for (double v : s.genuine) fr += v >= t ? 1 : 0;
  return {static_cast<double>(fa) / static_cast<double>(s.imposter.size()),
          static_cast<double>(fr) / static_cast<double>(s.genuine.size())};
}

std::vector<double> distinct(const ScoreSet& s) {
  std::set<double> all(s.genuine.begin(), s.genuine.end());
  all.insert(s.imposter.begin(), s.imposter.end());
  return {all.begin(), all.end()};
}

}  // namespace

EerPoint eer(const ScoreSet& s) {
  const auto d = distinct(s);
  std::vector<double> candidates;
  for (std::size_t i = 0; i < d.size(); ++i) {
    candidates.push_back(d[i]);
    if (i + 1 < d.size()) candidates.push_back((d[i] + d[i + 1]) / 2);
  }
  EerPoint best;
  double gap = std::numeric_limits<double>::infinity();
  for (double t : candidates) {  // ascending, so strict < keeps the smallest threshold
    const Counts c = count_at(s, t);
    if (std::fabs(c.far - c.frr) < gap) {
      gap = std::fabs(c.far - c.frr);
      best = {(c.far + c.frr) / 2, t, c.far, c.frr};
    }
  }
  return best;
}

double det_auc_grid(const ScoreSet& s, long cells) {
  std::vector<Counts> pts{{0.0, 1.0}};
  for (double t : distinct(s)) pts.push_back(count_at(s, t));
  pts.push_back({1.0, 0.0});
  double area = 0;
  std::size_t seg = 0;
  for (long k = 0; k < cells; ++k) {
    const double x = (static_cast<double>(k) + 0.5) / static_cast<double>(cells);
    while (seg + 1 < pts.size() && !(pts[seg + 1].far >= x && pts[seg + 1].far > pts[seg].far)) ++seg;
    if (seg + 1 >= pts.size()) break;
    const Counts a = pts[seg], b = pts[seg + 1];
    const double f = (x - a.far) / (b.far - a.far);
    area += a.frr + f * (b.frr - a.frr);
  }
  return area / static_cast<double>(cells);
}

GradCheck check_gradients(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                          double eps, double floor, double fault) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<Array<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad() * (1.0 + fault));

  GradCheck out;
  NoGradGuard guard;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Array<double>& v = params[pi].mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      auto central = [&](double h) {
        v[i] = saved + h;
        const double fp = loss().item();
        v[i] = saved - h;
        const double fm = loss().item();
        v[i] = saved;
        return (fp - fm) / (2 * h);
      };
      const double a = analytic[pi][i];
      auto rel_error = [&](double numeric) {
        return std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      };
      double rel = rel_error(central(eps));
      if (rel > kRefineAbove) {
        // The step may straddle a kink (PReLU, |x|) somewhere downstream; a much
        // smaller step that stays on one side settles it.
        rel = std::min(rel, rel_error(central(eps * 1e-2)));
        ++out.refined;
      }
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace texmatch::reference
