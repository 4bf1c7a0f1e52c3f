#include "texmatch/losses.hpp"
#include "texmatch/ops.hpp"
#include "texmatch/reference.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace texmatch;
using T = Tensor<double>;

namespace {

T random_image(Index n, Index h, Index w, std::uint64_t key) {
  Rng r = Rng(21, Stream::test).derive(key);
  Array<double> a(n * h * w);
  for (auto& v : a) v = r.uniform();
  return T::from({n, 1, h, w}, a);
}

reference::Vec vec(const T& t) { return {t.value().data(), t.value().data() + t.numel()}; }

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("SSIM of an image with itself is 1, and matches the reference elsewhere") {
  const LossConfig cfg;
  const T x = random_image(2, 16, 40, 1), y = random_image(2, 16, 40, 2);
  CHECK(ssim(x, x, cfg) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim_loss(x, x, cfg).item() < 1e-9);
  const double ref = reference::ssim(vec(x), vec(y), 2, 16, 40, cfg.ssim_window, cfg.ssim_sigma, cfg.ssim_c1, cfg.ssim_c2);
  CHECK(ssim(x, y, cfg) == doctest::Approx(ref).epsilon(1e-10));
  CHECK(ssim_loss(x, y, cfg).item() == doctest::Approx(1.0 - ref).epsilon(1e-10));
}

TEST_CASE("SSIM needs images at least as large as the window") {
  const LossConfig cfg;
  CHECK_THROWS_AS(ssim_loss(random_image(1, 8, 40, 3), random_image(1, 8, 40, 4), cfg), ShapeError);
}

TEST_CASE("Gram matrix matches the reference, normalized and raw") {
  const T x = random_image(2, 5, 7, 5);
  for (bool norm : {true, false}) {
    const auto ref = reference::gram(vec(x), 2, 5, 7, norm);
    const auto got = vec(gram(x, norm));
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("relational loss is zero on identical images for every alpha") {
  const T x = random_image(2, 16, 40, 6);
  for (double alpha : {0.0, 0.25, 0.5, 1.0}) {
    LossConfig cfg;
    cfg.alpha = alpha;
    CHECK(relational_loss(x, x, cfg).item() == 0.0);
  }
}

TEST_CASE("alpha=0 relational loss is invariant to orthogonal column mixing") {
  LossConfig cfg;
  cfg.alpha = 0.0;
  const Index h = 16, w = 40;
  const T target = random_image(1, h, w, 7), recon = random_image(1, h, w, 8);
  const double base = relational_loss(target, recon, cfg).item();

  // A plane rotation of columns 3 and 17 is orthogonal, so recon R R^T recon^T = recon recon^T.
  const double th = 0.7;
  Array<double> rotated = recon.value();
  for (Index i = 0; i < h; ++i) {
    const double a = recon.value()[i * w + 3], b = recon.value()[i * w + 17];
    rotated[i * w + 3] = std::cos(th) * a - std::sin(th) * b;
    rotated[i * w + 17] = std::sin(th) * a + std::cos(th) * b;
  }
  CHECK(relational_loss(target, T::from({1, 1, h, w}, rotated), cfg).item() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("relational loss combines the two terms with alpha") {
  const T x = random_image(1, 16, 40, 9), y = random_image(1, 16, 40, 10);
  LossConfig cfg;
  cfg.alpha = 1.0;
  const double s = relational_loss(x, y, cfg).item();
  cfg.alpha = 0.0;
  const double g = relational_loss(x, y, cfg).item();
  cfg.alpha = 0.3;
  CHECK(relational_loss(x, y, cfg).item() == doctest::Approx(0.3 * s + 0.7 * g).epsilon(1e-12));
  CHECK(s == doctest::Approx(ssim_loss(x, y, cfg).item()).epsilon(1e-12));
  CHECK(g == doctest::Approx(mse_loss(gram(x, true), gram(y, true)).item()).epsilon(1e-12));
}

TEST_CASE("corruption is zero-mean Gaussian with the requested std") {
  const T clean = T::from({1, 1, 64, 512}, Array<double>::Constant(64 * 512, 0.5));
  Rng rng(1, Stream::noise);
  const T noisy = corrupt(clean, 0.25, rng);
  const Array<double> d = noisy.value() - clean.value();
  const double m = d.mean();
  const double sd = std::sqrt((d - m).square().mean());
  CHECK(std::fabs(m) < 0.01);
  CHECK(std::fabs(sd - 0.25) < 0.01);
  CHECK(d.maxCoeff() > 0.5);  // unclamped

  Rng rng0(1, Stream::noise);
  CHECK((corrupt(clean, 0.0, rng0).value() == clean.value()).all());
}

TEST_CASE("binary cross-entropy") {
  const T s = T::from({2}, {0.8, 0.3});
  const T y = T::from({2}, {1.0, 0.0});
  const double expected = -(std::log(0.8) + std::log(0.7)) / 2;
  CHECK(bce_loss(s, y).item() == doctest::Approx(expected).epsilon(1e-12));
  // clamped so a saturated wrong answer stays finite
  const double big = bce_loss(T::from({1}, {0.0}), T::from({1}, {1.0})).item();
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(-std::log(kBceClamp)).epsilon(1e-9));
  CHECK_THROWS_AS(bce_loss(s, T::from({3}, {0.0, 1.0, 0.0})), ShapeError);
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  cfg.validate();
  cfg.alpha = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg = LossConfig{};
  cfg.ssim_window = 4;
  CHECK_THROWS(cfg.validate());
  cfg = LossConfig{};
  cfg.noise_sigma = -0.1;
  CHECK_THROWS(cfg.validate());
}

}  // TEST_SUITE
