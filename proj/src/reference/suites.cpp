#include "texmatch/checkpoint.hpp"
#include "texmatch/data.hpp"
#include "texmatch/layers.hpp"
#include "texmatch/losses.hpp"
#include "texmatch/models.hpp"
#include "texmatch/number_format.hpp"
#include "texmatch/ops.hpp"
#include "texmatch/optim.hpp"
#include "texmatch/reference.hpp"
#include "texmatch/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

namespace texmatch::reference {

namespace {

using T = Tensor<double>;

constexpr double kGradTolerance = 1e-4;

Array<double> uniform(Index n, Rng& rng, double lo, double hi) {
  Array<double> a(n);
  for (Index i = 0; i < n; ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

// Magnitude in [lo, hi] with a random sign: keeps values away from kinks at 0.
Array<double> away_from_zero(Index n, Rng& rng, double lo, double hi) {
  Array<double> a(n);
  for (Index i = 0; i < n; ++i) a[i] = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(lo, hi);
  return a;
}

T param(const Shape& s, Array<double> v) { return T::parameter(s, std::move(v)); }
T param(const Shape& s, Rng& rng, double lo = -1, double hi = 1) { return param(s, uniform(s.numel(), rng, lo, hi)); }

Index between(Rng& rng, Index lo, Index hi) { return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

Shape random_shape(Rng& rng, Index max_rank = 4, Index max_dim = 4) {
  std::vector<Index> d(static_cast<std::size_t>(between(rng, 1, max_rank)));
  for (auto& e : d) e = between(rng, 1, max_dim);
  return Shape(d);
}

// sum(f() * R) for a fixed random R, so every output element gets its own weight.
std::function<T()> weighted(std::function<T()> f, Rng& rng) {
  Shape s;
  {
    NoGradGuard g;
    s = f().shape();
  }
  const T r = T::from(s, uniform(s.numel(), rng, -1, 1));
  return [f, r] { return sum(f() * r); };
}

Vec to_vec(const T& t) { return Vec(t.value().data(), t.value().data() + t.numel()); }

double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

using CaseFn = std::function<GradCheck(Rng&, double fault)>;

CheckResult run_grad_cases(const std::string& name, const CaseFn& fn, const SuiteOptions& o, std::uint64_t key) {
  const Rng root(o.seed, Stream::test);
  Rng rng = root.derive(key);
  double worst = 0;
  Index checked = 0, refined = 0;
  const double fault = o.inject_gradient_fault ? 1e-2 : 0.0;
  for (Index c = 0; c < o.cases; ++c) {
    const GradCheck g = fn(rng, fault);
    worst = std::max(worst, g.max_rel_error);
    checked += g.checked;
    refined += g.refined;
  }
  return {"grad " + name, worst < kGradTolerance,
          std::to_string(o.cases) + " cases, " + std::to_string(checked) + " partials (" + std::to_string(refined) +
                                                           " refined), max rel err " + fmt(worst)};
}

CaseFn unary_case(Elementwise kind, double lo, double hi, bool signed_values) {
  return [=](Rng& rng, double fault) {
    const Shape s = random_shape(rng);
    T x = param(s, signed_values ? away_from_zero(s.numel(), rng, lo, hi) : uniform(s.numel(), rng, lo, hi));
    auto f = weighted([=] { return kind == Elementwise::clampmin ? clampmin(x, 0.0) : elementwise(kind, x); }, rng);
    return check_gradients(f, {x}, 1e-5, 1e-6, fault);
  };
}

CaseFn binary_case(Elementwise kind) {
  return [=](Rng& rng, double fault) {
    const Shape s = random_shape(rng);
    const bool broadcast = rng.below(3) == 0;
    const Shape sb = broadcast ? Shape{} : s;
    T a = param(s, rng);
    T b = kind == Elementwise::div ? param(sb, away_from_zero(sb.numel(), rng, 0.5, 2.0)) : param(sb, rng);
    if (broadcast && rng.below(2)) std::swap(a, b);
    auto f = weighted([=] { return elementwise(kind, a, b); }, rng);
    return check_gradients(f, {a, b}, 1e-5, 1e-6, fault);
  };
}

// Tiny autoencoder for the composite-objective checks.
EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.channels = {2, 3};
  e.height = 8;
  e.width = 16;
  return e;
}

LossConfig small_window() {
  LossConfig l;
  l.ssim_window = 7;
  return l;
}

CaseFn composite_case(bool denoising) {
  return [=](Rng& rng, double fault) {
    Rng init(rng(), Stream::init);
    auto ae = std::make_shared<Autoencoder<double>>(build_autoencoder<double>(tiny_encoder(), init));
    const Shape s{2, 1, 8, 16};
    const T clean = T::from(s, uniform(s.numel(), rng, 0, 1));
    Rng noise(rng(), Stream::noise);
    const T input = denoising ? corrupt(clean, 0.25, noise) : clean;
    LossConfig cfg = small_window();
    cfg.alpha = rng.uniform(0.2, 0.8);
    auto f = [=] {
      const T recon = ae->forward(input);
      return denoising ? denoising_relational_loss(clean, recon, cfg) : relational_loss(clean, recon, cfg);
    };
    return check_gradients(f, ae->store().learnable(), 1e-5, 1e-6, fault);
  };
}

}  // namespace

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::vector<CheckResult> gradient_suite(const SuiteOptions& o) {
  std::vector<std::pair<std::string, CaseFn>> cases;
  cases.emplace_back("add", binary_case(Elementwise::add));
  cases.emplace_back("sub", binary_case(Elementwise::sub));
  cases.emplace_back("mul", binary_case(Elementwise::mul));
  cases.emplace_back("div", binary_case(Elementwise::div));
  cases.emplace_back("neg", unary_case(Elementwise::neg, -1, 1, false));
  cases.emplace_back("abs", unary_case(Elementwise::abs, 0.1, 1, true));
  cases.emplace_back("square", unary_case(Elementwise::square, -1, 1, false));
  cases.emplace_back("sqrt", unary_case(Elementwise::sqrt, 0.2, 2, false));
  cases.emplace_back("exp", unary_case(Elementwise::exp, -1, 1, false));
  cases.emplace_back("log", unary_case(Elementwise::log, 0.2, 2, false));
  cases.emplace_back("clampmin", unary_case(Elementwise::clampmin, 0.1, 1, true));

  cases.emplace_back("matmul", [](Rng& rng, double fault) {
    const Index n = between(rng, 1, 5), k = between(rng, 1, 5), m = between(rng, 1, 5);
    T a = param({n, k}, rng), b = param({k, m}, rng);
    return check_gradients(weighted([=] { return matmul(a, b); }, rng), {a, b}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("reduce", [](Rng& rng, double fault) {
    const Shape s = random_shape(rng);
    std::vector<Index> axes;
    for (Index i = 0; i < s.rank(); ++i) {
      if (rng.below(2)) axes.push_back(i);
    }
    const Reduction kind = rng.below(2) ? Reduction::sum : Reduction::mean;
    T x = param(s, rng);
    return check_gradients(weighted([=] { return reduce(kind, x, axes); }, rng), {x}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("reshape+scale", [](Rng& rng, double fault) {
    const Index a = between(rng, 1, 4), b = between(rng, 1, 4), c = between(rng, 1, 4);
    const double k = rng.uniform(-2, 2);
    T x = param({a, b, c}, rng);
    return check_gradients(weighted([=] { return scale(reshape(x, {a * b, c}), k); }, rng), {x}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("conv2d", [](Rng& rng, double fault) {
    ConvSpec sp;
    sp.in_channels = between(rng, 1, 3);
    sp.out_channels = between(rng, 1, 3);
    const Index k = between(rng, 1, 3);
    sp.kernel = {k, between(rng, 1, 3)};
    sp.stride = {between(rng, 1, 2), between(rng, 1, 2)};
    sp.padding = {between(rng, 0, 1), between(rng, 0, 1)};
    const Index n = between(rng, 1, 2), h = between(rng, 3, 6), w = between(rng, 3, 6);
    T x = param({n, sp.in_channels, h, w}, rng);
    T wt = param({sp.out_channels, sp.in_channels, sp.kernel.first, sp.kernel.second}, rng);
    T b = param({sp.out_channels}, rng);
    return check_gradients(weighted([=] { return conv2d(x, wt, b, sp); }, rng), {x, wt, b}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("conv_transpose2d", [](Rng& rng, double fault) {
    ConvSpec sp;
    sp.in_channels = between(rng, 1, 3);
    sp.out_channels = between(rng, 1, 3);
    sp.kernel = {between(rng, 2, 4), between(rng, 1, 4)};
    sp.stride = {between(rng, 1, 2), between(rng, 1, 2)};
    sp.padding = {between(rng, 0, 1), 0};
    sp.transposed = true;
    const Index n = between(rng, 1, 2), h = between(rng, 2, 4), w = between(rng, 2, 4);
    T x = param({n, sp.in_channels, h, w}, rng);
    T wt = param({sp.in_channels, sp.out_channels, sp.kernel.first, sp.kernel.second}, rng);
    T b = param({sp.out_channels}, rng);
    return check_gradients(weighted([=] { return conv_transpose2d(x, wt, b, sp); }, rng), {x, wt, b}, 1e-5, 1e-6,
                           fault);
  });
  cases.emplace_back("batchnorm2d", [](Rng& rng, double fault) {
    const Index n = between(rng, 2, 3), c = between(rng, 1, 3), h = between(rng, 1, 3), w = between(rng, 1, 3);
    auto st = std::make_shared<BatchNormState<double>>(BatchNormState<double>::create(c));
    st->gamma.mutable_value() = uniform(c, rng, 0.5, 1.5);
    st->beta.mutable_value() = uniform(c, rng, -0.5, 0.5);
    st->running_mean.mutable_value() = uniform(c, rng, -0.5, 0.5);
    st->running_var.mutable_value() = uniform(c, rng, 0.5, 2.0);
    st->mode = rng.below(4) == 0 ? Mode::eval : Mode::train;
    T x = param({n, c, h, w}, rng);
    return check_gradients(weighted([=] { return batchnorm2d(x, *st); }, rng), {x, st->gamma, st->beta}, 1e-5, 1e-6,
                           fault);
  });
  cases.emplace_back("prelu", [](Rng& rng, double fault) {
    const Index n = between(rng, 1, 2), c = between(rng, 1, 3), h = between(rng, 1, 3), w = between(rng, 1, 3);
    T x = param({n, c, h, w}, away_from_zero(n * c * h * w, rng, 0.1, 1));
    T a = param({c}, rng, 0, 0.5);
    return check_gradients(weighted([=] { return prelu(x, a); }, rng), {x, a}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("avgpool2d", [](Rng& rng, double fault) {
    const Index ph = between(rng, 1, 2), pw = between(rng, 1, 3);
    T x = param({between(rng, 1, 2), between(rng, 1, 2), ph * between(rng, 1, 3), pw * between(rng, 1, 3)}, rng);
    return check_gradients(weighted([=] { return avgpool2d(x, {ph, pw}); }, rng), {x}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("texture_energy", [](Rng& rng, double fault) {
    const Index n = between(rng, 1, 2), c = between(rng, 1, 3), h = between(rng, 1, 4), w = between(rng, 1, 4);
    T x = param({n, c, h, w}, away_from_zero(n * c * h * w, rng, 0.1, 1));
    return check_gradients(weighted([=] { return texture_energy(x); }, rng), {x}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("fully_connected", [](Rng& rng, double fault) {
    const Index n = between(rng, 1, 4), d = between(rng, 1, 5), k = between(rng, 1, 5);
    T x = param({n, d}, rng), w = param({d, k}, rng), b = param({k}, rng);
    return check_gradients(weighted([=] { return fully_connected(x, w, b); }, rng), {x, w, b}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("sigmoid", [](Rng& rng, double fault) {
    T x = param(random_shape(rng), rng, -4, 4);
    return check_gradients(weighted([=] { return sigmoid(x); }, rng), {x}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("ssim_loss", [](Rng& rng, double fault) {
    const Shape s{between(rng, 1, 2), 1, between(rng, 7, 10), between(rng, 7, 12)};
    T x = param(s, rng, 0, 1), y = param(s, rng, 0, 1);
    const LossConfig cfg = small_window();
    return check_gradients([=] { return ssim_loss(x, y, cfg); }, {x, y}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("gram", [](Rng& rng, double fault) {
    T x = param({between(rng, 1, 2), 1, between(rng, 1, 4), between(rng, 1, 5)}, rng);
    const bool norm = rng.below(2);
    return check_gradients(weighted([=] { return gram(x, norm); }, rng), {x}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("mse_loss", [](Rng& rng, double fault) {
    const Shape s = random_shape(rng);
    T a = param(s, rng), b = param(s, rng);
    return check_gradients([=] { return mse_loss(a, b); }, {a, b}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("bce_loss", [](Rng& rng, double fault) {
    const Index n = between(rng, 1, 8);
    T s = param({n}, rng, 0.05, 0.95);
    Array<double> y(n);
    for (Index i = 0; i < n; ++i) y[i] = static_cast<double>(rng.below(2));
    const T t = T::from({n}, y);
    return check_gradients([=] { return bce_loss(s, t); }, {s}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("relational_loss", [](Rng& rng, double fault) {
    const Shape s{between(rng, 1, 2), 1, between(rng, 7, 9), between(rng, 7, 12)};
    T target = param(s, rng, 0, 1), recon = param(s, rng, 0, 1);
    LossConfig cfg = small_window();
    cfg.alpha = rng.uniform(0, 1);
    cfg.gram_normalize = rng.below(2);
    return check_gradients([=] { return relational_loss(target, recon, cfg); }, {target, recon}, 1e-5, 1e-6, fault);
  });
  cases.emplace_back("autoencoder + relational objective", composite_case(false));
  cases.emplace_back("autoencoder + relational denoising objective", composite_case(true));

  std::vector<CheckResult> out;
  for (std::size_t i = 0; i < cases.size(); ++i) out.push_back(run_grad_cases(cases[i].first, cases[i].second, o, i));
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Dataset tiny_dataset(std::uint64_t seed, Index classes, Index per_class, Index h, Index w) {
  SynthConfig sc;
  sc.n_classes = classes;
  sc.imgs_per_class = per_class;
  sc.height = h;
  sc.width = w;
  sc.seed = seed;
  sc.min_wavelength = 4;
  sc.max_wavelength = 16;
  sc.noise_cell = 4;
  sc.max_shift = std::min<Index>(4, w - 1);
  return generate_synthetic(sc);
}

TrainConfig tiny_stage1(std::uint64_t seed) {
  TrainConfig t;
  t.seed = seed;
  t.batch_size = 4;
  t.stage1_epochs = 2;
  t.encoder.channels = {2, 4};
  t.encoder.height = 16;
  t.encoder.width = 32;
  t.loss.ssim_window = 7;
  return t;
}

bool same_run(const TrainResult& a, const TrainResult& b) {
  if (a.log.size() != b.log.size()) return false;
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    if (a.log[i].loss != b.log[i].loss) return false;
  }
  const auto& ta = a.checkpoint.tensors;
  const auto& tb = b.checkpoint.tensors;
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || ta[i].payload != tb[i].payload) return false;
  }
  return true;
}

}  // namespace

std::vector<CheckResult> loss_identity_suite(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  Rng rng = Rng(o.seed, Stream::test).derive(1000);
  const LossConfig base;

  {
    double worst = 0;
    for (int c = 0; c < 10; ++c) {
      const Shape s{2, 1, 16, 40};
      const T x = T::from(s, uniform(s.numel(), rng, 0, 1));
      worst = std::max(worst, std::fabs(ssim_loss(x, x, base).item()));
    }
    out.push_back({"ssim_loss(I, I) < 1e-9", worst < 1e-9, "max " + fmt(worst)});
  }
  {
    bool ok = true;
    std::string detail;
    for (double alpha : {0.0, 0.5, 1.0}) {
      LossConfig cfg = base;
      cfg.alpha = alpha;
      const Shape s{2, 1, 16, 40};
      const T x = T::from(s, uniform(s.numel(), rng, 0, 1));
      const double v = relational_loss(x, x, cfg).item();
      ok = ok && v == 0.0;
      detail += "alpha " + fmt(alpha) + ": " + fmt(v) + "; ";
    }
    out.push_back({"relational_loss(I, I) == 0", ok, detail});
  }
  {
    double worst = 0;
    LossConfig cfg = base;
    cfg.alpha = 0.0;
    for (int c = 0; c < 10; ++c) {
      const Index h = 16, w = 40;
      const Shape s{1, 1, h, w};
      const T target = T::from(s, uniform(s.numel(), rng, 0, 1));
      const Array<double> r = uniform(s.numel(), rng, 0, 1);
      std::vector<Index> perm(static_cast<std::size_t>(w));
      for (Index j = 0; j < w; ++j) perm[static_cast<std::size_t>(j)] = j;
      for (Index j = w - 1; j > 0; --j) std::swap(perm[static_cast<std::size_t>(j)], perm[rng.below(static_cast<std::uint64_t>(j + 1))]);
      Array<double> rp(s.numel());
      for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) rp[i * w + j] = r[i * w + perm[static_cast<std::size_t>(j)]];
      const double a = relational_loss(target, T::from(s, r), cfg).item();
      const double b = relational_loss(target, T::from(s, rp), cfg).item();
      worst = std::max(worst, std::fabs(a - b));
    }
    out.push_back({"alpha=0 relation term invariant to column permutation", worst < 1e-9, "max diff " + fmt(worst)});
  }
  {
    const Dataset d = tiny_dataset(o.seed, 2, 4, 16, 32);
    TrainConfig a = tiny_stage1(o.seed), b = a;
    a.objective = Objective::relational_denoising;
    a.loss.noise_sigma = 0.0;
    b.objective = Objective::relational;
    const bool eq = same_run(pretrain_stage1(a, d), pretrain_stage1(b, d));
    out.push_back({"denoising objective at sigma=0 steps exactly like the relational objective", eq,
                   eq ? "losses and parameter bytes identical" : "runs differ"});
  }
  {
    const Dataset d = tiny_dataset(o.seed, 2, 4, 16, 32);
    TrainConfig a = tiny_stage1(o.seed), b = a;
    a.objective = Objective::relational;
    a.loss.alpha = 1.0;
    b.objective = Objective::ssim_only;
    const bool eq = same_run(pretrain_stage1(a, d), pretrain_stage1(b, d));
    out.push_back({"relational objective at alpha=1 steps exactly like 1 - SSIM", eq,
                   eq ? "losses and parameter bytes identical" : "runs differ"});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> metric_suite(const SuiteOptions& o) {
  Rng rng = Rng(o.seed, Stream::test).derive(2000);
  double eer_worst = 0, auc_worst = 0;
  bool invariant = true;
  Index sets = 0, tie_sets = 0;
  for (int c = 0; c < 100; ++c) {
    const Index total = between(rng, 10, 1000);
    const Index ng = between(rng, 1, total - 1);
    // Scores on a dyadic grid so the transforms below cannot merge distinct values;
    // a coarse grid in some sets forces ties.
    const bool ties = c % 3 == 0;
    const double grid = ties ? 64.0 : 1048576.0;
    const double shift = rng.uniform(0.0, 0.4);
    ScoreSet s;
    for (Index i = 0; i < total; ++i) {
      const double base = i < ng ? rng.uniform(0.0, 0.7) : rng.uniform(shift, 1.0);
      const double v = std::floor(base * grid) / grid;
      (i < ng ? s.genuine : s.imposter).push_back(v);
    }
    ++sets;
    tie_sets += ties;
    const DetCurve det = det_curve(s);
    const EerPoint ref = reference::eer(s);
    eer_worst = std::max(eer_worst, std::fabs(det.eer.eer - ref.eer));
    auc_worst = std::max(auc_worst, std::fabs(det.auc - det_auc_grid(s, 1000000)));

    const std::vector<std::function<double(double)>> transforms = {
        [](double v) { return 4 * v - 1; }, [](double v) { return std::exp(3 * v); },
        [](double v) { return v * v * v + v; }, [](double v) { return std::atan(v); }};
    for (const auto& f : transforms) {
      ScoreSet t;
      for (double v : s.genuine) t.genuine.push_back(f(v));
      for (double v : s.imposter) t.imposter.push_back(f(v));
      const DetCurve dt = det_curve(t);
      invariant = invariant && dt.eer.eer == det.eer.eer && dt.auc == det.auc;
    }
  }
  return {
      {"EER equals brute-force oracle (100 sets)", eer_worst <= 1e-12,
       std::to_string(sets) + " sets (" + std::to_string(tie_sets) + " with ties), max diff " + fmt(eer_worst)},
      {"DET-AUC equals 1e6-point grid oracle", auc_worst <= 1e-6, "max diff " + fmt(auc_worst)},
      {"EER and AUC invariant under monotone transforms", invariant, invariant ? "exact" : "changed"},
  };
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> protocol_suite(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  {
    const Dataset test = tiny_dataset(o.seed, 10, 6, 8, 16);
    Rng init(o.seed, Stream::init);
    EncoderConfig e = tiny_encoder();
    auto m = build_matcher<float>(e, MatcherHeadConfig{8, 4}, init);
    bool ok = true;
    std::string detail;
    for (MatchMode mode : {MatchMode::pairwise, MatchMode::offline}) {
      const ScoreSet s = all_vs_all_scores(m, test, mode);
      ok = ok && s.genuine.size() == 150 && s.imposter.size() == 1620;
      detail += std::string(to_string(mode)) + ": " + std::to_string(s.genuine.size()) + " genuine / " +
                std::to_string(s.imposter.size()) + " imposter; ";
    }
    out.push_back({"10 classes x 6 images -> 150 genuine, 1620 imposter", ok, detail});
  }
  {
    const Dataset train = tiny_dataset(o.seed, 20, 10, 8, 16);
    Rng pairs(o.seed, Stream::pairs);
    bool ok = true;
    for (int b = 0; b < 200 && ok; ++b) {
      const PairIndices p = sample_pair_indices(train, 32, pairs);
      Index genuine = 0;
      for (std::size_t i = 0; i < p.y.size(); ++i) {
        const bool same = train.samples[p.a[i]].class_id == train.samples[p.b[i]].class_id;
        ok = ok && same == (p.y[i] == 0) && p.a[i] != p.b[i];
        genuine += p.y[i] == 0;
      }
      ok = ok && p.y.size() == 32 && genuine == 16;
    }
    out.push_back({"every batch of 32 pairs has exactly 16 genuine", ok, "200 batches, labels match classes"});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CheckResult> oracle_suite(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  Rng rng = Rng(o.seed, Stream::test).derive(3000);
  NoGradGuard guard;
  {
    const T a = T::from({5, 7}, uniform(35, rng, -1, 1)), b = T::from({7, 3}, uniform(21, rng, -1, 1));
    const double d = max_abs_diff(to_vec(matmul(a, b)), reference::matmul(to_vec(a), to_vec(b), 5, 7, 3));
    out.push_back({"matmul vs triple loop", d <= 1e-12, "max diff " + fmt(d)});
  }
  {
    double worst = 0;
    for (int c = 0; c < 10; ++c) {
      ConvSpec sp;
      sp.in_channels = 2;
      sp.out_channels = between(rng, 1, 3);
      sp.kernel = {3, 3};
      sp.stride = {between(rng, 1, 2), between(rng, 1, 2)};
      sp.padding = {between(rng, 0, 1), between(rng, 0, 1)};
      const Index n = 2, h = 6, w = 10;
      const T x = T::from({n, 2, h, w}, uniform(n * 2 * h * w, rng, -1, 1));
      const T wt = T::from({sp.out_channels, 2, 3, 3}, uniform(sp.out_channels * 18, rng, -1, 1));
      const T b = T::from({sp.out_channels}, uniform(sp.out_channels, rng, -1, 1));
      const Vec ref = reference::conv2d(to_vec(x), to_vec(wt), to_vec(b), n, 2, h, w, sp.out_channels, 3, 3,
                                        sp.stride.first, sp.stride.second, sp.padding.first, sp.padding.second);
      worst = std::max(worst, max_abs_diff(to_vec(conv2d(x, wt, b, sp)), ref));
    }
    out.push_back({"conv2d vs direct convolution", worst <= 1e-10, "max diff " + fmt(worst)});
  }
  {
    double worst = 0, adj = 0;
    for (int c = 0; c < 10; ++c) {
      ConvSpec sp;
      sp.in_channels = between(rng, 1, 3);
      sp.out_channels = between(rng, 1, 3);
      const Index k = c % 2 ? 4 : 2;
      sp.kernel = {k, k};
      sp.stride = {2, 2};
      sp.padding = {(k - 2) / 2, (k - 2) / 2};
      sp.transposed = true;
      const Index n = 2, h = 3, w = 5;
      const T x = T::from({n, sp.in_channels, h, w}, uniform(n * sp.in_channels * h * w, rng, -1, 1));
      const T wt = T::from({sp.in_channels, sp.out_channels, k, k},
                           uniform(sp.in_channels * sp.out_channels * k * k, rng, -1, 1));
      const T b = T::from({sp.out_channels}, uniform(sp.out_channels, rng, -1, 1));
      const Vec y = to_vec(conv_transpose2d(x, wt, b, sp));
      worst = std::max(worst, max_abs_diff(y, reference::conv_transpose2d(to_vec(x), to_vec(wt), to_vec(b), n,
                                                                          sp.in_channels, h, w, sp.out_channels, k,
                                                                          k, 2, 2, sp.padding.first,
                                                                          sp.padding.second)));
      // With zero bias the transposed conv is the adjoint of the forward conv
      // with the same geometry.
      ConvSpec fw = sp;
      fw.transposed = false;
      std::swap(fw.in_channels, fw.out_channels);
      const auto [oh, ow] = sp.output_extent(h, w);
      const T zero_t = T::zeros({sp.out_channels});
      const T zero_f = T::zeros({sp.in_channels});
      const Vec yt = to_vec(conv_transpose2d(x, wt, zero_t, sp));
      // <convT(x), z> == <x, conv(z)>.
      const T z = T::from({n, sp.out_channels, oh, ow}, uniform(n * sp.out_channels * oh * ow, rng, -1, 1));
      const Vec cz = to_vec(conv2d(z, wt, zero_f, fw));
      double lhs = 0, rhs = 0;
      for (std::size_t i = 0; i < yt.size(); ++i) lhs += yt[i] * z.value()[static_cast<Index>(i)];
      const Vec xv = to_vec(x);
      for (std::size_t i = 0; i < xv.size(); ++i) rhs += xv[i] * cz[i];
      adj = std::max(adj, std::fabs(lhs - rhs));
    }
    out.push_back({"conv_transpose2d vs scatter loops", worst <= 1e-10, "max diff " + fmt(worst)});
    out.push_back({"conv_transpose2d is the adjoint of conv2d", adj <= 1e-10, "max |<Tx,z> - <x,T'z>| " + fmt(adj)});
  }
  {
    const std::vector<Index> shape{4, 6};
    const T a = T::from({4, 6}, uniform(24, rng, -1, 1));
    const double d = max_abs_diff(to_vec(mean(a, {1})), reference::mean_axis(to_vec(a), shape, 1));
    out.push_back({"mean over axis 1 vs loop", d <= 1e-12, "max diff " + fmt(d)});
  }
  {
    const T x = T::from({2, 3, 5, 7}, uniform(210, rng, -1, 1));
    const double d = max_abs_diff(to_vec(texture_energy(x)), reference::texture_energy(to_vec(x), 2, 3, 5, 7));
    out.push_back({"texture energy vs loop", d <= 1e-12, "max diff " + fmt(d)});
  }
  {
    const LossConfig cfg;
    const Index h = 24, w = 40;
    const T x = T::from({2, 1, h, w}, uniform(2 * h * w, rng, 0, 1));
    const T y = T::from({2, 1, h, w}, uniform(2 * h * w, rng, 0, 1));
    const double lib = 1.0 - ssim_loss(x, y, cfg).item();
    const double ref = reference::ssim(to_vec(x), to_vec(y), 2, h, w, cfg.ssim_window, cfg.ssim_sigma, cfg.ssim_c1,
                                       cfg.ssim_c2);
    out.push_back({"SSIM vs sliding-window reference", std::fabs(lib - ref) <= 1e-8, "diff " + fmt(std::fabs(lib - ref))});
  }
  {
    const T x = T::from({2, 1, 5, 9}, uniform(90, rng, -1, 1));
    const double d = max_abs_diff(to_vec(gram(x, true)), reference::gram(to_vec(x), 2, 5, 9, true));
    out.push_back({"Gram matrix vs loop", d <= 1e-12, "max diff " + fmt(d)});
  }
  {
    const T x = T::from({3, 4}, uniform(12, rng, -1, 1)), w = T::from({4, 2}, uniform(8, rng, -1, 1));
    const T b = T::from({2}, uniform(2, rng, -1, 1));
    Vec ref = reference::matmul(to_vec(x), to_vec(w), 3, 4, 2);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 2; ++j) ref[static_cast<std::size_t>(i * 2 + j)] += b.value()[j];
    const double d = max_abs_diff(to_vec(fully_connected(x, w, b)), ref);
    out.push_back({"fully connected vs matmul", d <= 1e-12, "max diff " + fmt(d)});
  }
  {
    auto st = BatchNormState<double>::create(3);
    st.mode = Mode::eval;
    st.running_mean.mutable_value() = uniform(3, rng, -1, 1);
    st.running_var.mutable_value() = uniform(3, rng, 0.5, 2);
    const T x = T::from({4, 3, 2, 2}, uniform(48, rng, -1, 1));
    const Vec full = to_vec(batchnorm2d(x, st));
    double d = 0;
    for (Index i = 0; i < 4; ++i) {
      const Array<double> one = x.value().segment(i * 12, 12);
      const Vec single = to_vec(batchnorm2d(T::from({1, 3, 2, 2}, one), st));
      for (Index k = 0; k < 12; ++k) d = std::max(d, std::fabs(single[static_cast<std::size_t>(k)] - full[static_cast<std::size_t>(i * 12 + k)]));
    }
    out.push_back({"eval-mode batch norm is per-sample", d == 0.0, "max diff " + fmt(d)});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<CheckResult> checkpoint_suite(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  const EncoderConfig e = tiny_encoder();
  Rng init(o.seed, Stream::init);
  auto ae = build_autoencoder<float>(e, init);
  const Checkpoint stage1 = make_checkpoint(ae.store(), {{"stage", "1"}, {"note", "round trip"}});
  const auto bytes = stage1.serialize();
  {
    const bool ok = Checkpoint::deserialize(bytes).serialize() == bytes;
    out.push_back({"serialize -> deserialize -> serialize is byte-identical", ok, std::to_string(bytes.size()) + " bytes"});
  }
  {
    const auto dir = std::filesystem::temp_directory_path() / ("texmatch_verify_" + std::to_string(o.seed));
    std::filesystem::create_directories(dir);
    stage1.save(dir / "a.ckpt");
    Checkpoint::load(dir / "a.ckpt").save(dir / "b.ckpt");
    const auto a = file_bytes(dir / "a.ckpt"), b = file_bytes(dir / "b.ckpt");
    const bool ok = a == bytes && b == bytes;
    std::filesystem::remove_all(dir);
    out.push_back({"save -> load -> save is byte-identical", ok, ok ? "identical files" : "files differ"});
  }
  {
    Rng other(o.seed + 1, Stream::init);
    auto fresh = build_autoencoder<float>(e, other);
    load_into(stage1, fresh.store(), LoadScope::all);
    const bool ok = make_checkpoint(fresh.store(), stage1.metadata).serialize() == bytes;
    out.push_back({"load_into a fresh model restores every tensor", ok, ok ? "identical" : "differs"});
  }
  {
    Rng head_init(o.seed, Stream::init);
    auto m = build_matcher<float>(e, MatcherHeadConfig{8, 4}, head_init, &stage1);
    const Checkpoint mc = make_checkpoint(m.store(), {});
    Index compared = 0;
    bool ok = true;
    for (const auto& t : stage1.tensors) {
      if (t.name.rfind("encoder.", 0) != 0) continue;
      const CheckpointTensor* mt = mc.find(t.name);
      ok = ok && mt && mt->payload == t.payload && mt->shape == t.shape;
      ++compared;
    }
    ok = ok && compared > 0;
    out.push_back({"stage-2 encoder init equals the stage-1 checkpoint bitwise", ok,
                   std::to_string(compared) + " encoder tensors compared"});
  }
  {
    Rng r64(o.seed, Stream::init);
    auto ae64 = build_autoencoder<double>(e, r64);
    const auto b64 = make_checkpoint(ae64.store(), {}).serialize();
    const bool ok = Checkpoint::deserialize(b64).serialize() == b64;
    out.push_back({"float64 checkpoint round trip is byte-identical", ok, std::to_string(b64.size()) + " bytes"});
  }
  return out;
}

}  // namespace texmatch::reference
