#include "texmatch/layers.hpp"
#include "texmatch/ops.hpp"
#include "texmatch/reference.hpp"

#include <doctest.h>

#include <cmath>

using namespace texmatch;
using T = Tensor<double>;

namespace {

Array<double> random_values(Index n, std::uint64_t key, double lo = -1, double hi = 1) {
  Rng r = Rng(11, Stream::test).derive(key);
  Array<double> a(n);
  for (auto& v : a) v = r.uniform(lo, hi);
  return a;
}

reference::Vec vec(const T& t) { return {t.value().data(), t.value().data() + t.numel()}; }

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("conv2d output extent and values") {
  ConvSpec s;
  s.in_channels = 2;
  s.out_channels = 3;
  s.kernel = {3, 3};
  s.padding = {1, 1};
  CHECK(s.output_extent(64, 512) == std::pair<Index, Index>{64, 512});
  s.stride = {2, 2};
  CHECK(s.output_extent(7, 9) == std::pair<Index, Index>{4, 5});

  const T x = T::from({2, 2, 7, 9}, random_values(252, 1));
  const T w = T::from({3, 2, 3, 3}, random_values(54, 2));
  const T b = T::from({3}, random_values(3, 3));
  const auto ref = reference::conv2d(vec(x), vec(w), vec(b), 2, 2, 7, 9, 3, 3, 3, 2, 2, 1, 1);
  const auto got = vec(conv2d(x, w, b, s));
  REQUIRE(got.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("transposed conv doubles the extent with kernel 2 or 4") {
  for (Index k : {2, 4}) {
    ConvSpec s;
    s.in_channels = 2;
    s.out_channels = 1;
    s.kernel = {k, k};
    s.stride = {2, 2};
    s.padding = {(k - 2) / 2, (k - 2) / 2};
    s.transposed = true;
    CHECK(s.output_extent(1, 8) == std::pair<Index, Index>{2, 16});
    const T x = T::from({1, 2, 3, 4}, random_values(24, 4));
    const T w = T::from({2, 1, k, k}, random_values(2 * k * k, 5));
    const T b = T::from({1}, {0.25});
    const auto ref = reference::conv_transpose2d(vec(x), vec(w), vec(b), 1, 2, 3, 4, 1, k, k, 2, 2, s.padding.first,
                                                 s.padding.second);
    const auto got = vec(conv_transpose2d(x, w, b, s));
    REQUIRE(got.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv rejects wrong weight shapes") {
  ConvSpec s;
  s.in_channels = 2;
  s.out_channels = 3;
  const T x = T::from({1, 2, 5, 5}, random_values(50, 6));
  CHECK_THROWS_AS(conv2d(x, T::zeros({3, 1, 3, 3}), T::zeros({3}), s), ShapeError);
  CHECK_THROWS_AS(conv2d(x, T::zeros({3, 2, 3, 3}), T::zeros({2}), s), ShapeError);
}

TEST_CASE("batch norm in train mode normalizes each channel and updates running stats") {
  auto st = BatchNormState<double>::create(2);
  const T x = T::from({4, 2, 3, 3}, random_values(72, 7, 2, 5));
  const T y = batchnorm2d(x, st);
  for (Index c = 0; c < 2; ++c) {
    double m = 0, v = 0;
    for (Index n = 0; n < 4; ++n)
      for (Index i = 0; i < 9; ++i) m += y.value()[(n * 2 + c) * 9 + i];
    m /= 36;
    for (Index n = 0; n < 4; ++n)
      for (Index i = 0; i < 9; ++i) v += std::pow(y.value()[(n * 2 + c) * 9 + i] - m, 2);
    v /= 36;
    CHECK(m == doctest::Approx(0).scale(1));
    CHECK(v == doctest::Approx(1).epsilon(1e-3));
  }
  // momentum 0.1 from (0, 1): running mean moves a tenth of the way to the batch mean (~3.5)
  CHECK(st.running_mean.value()[0] > 0.2);
  CHECK(st.running_mean.value()[0] < 0.5);
}

TEST_CASE("batch norm in eval mode uses running statistics") {
  auto st = BatchNormState<double>::create(1);
  st.mode = Mode::eval;
  st.running_mean.mutable_value()[0] = 2.0;
  st.running_var.mutable_value()[0] = 4.0;
  st.gamma.mutable_value()[0] = 3.0;
  st.beta.mutable_value()[0] = 1.0;
  const T y = batchnorm2d(T::from({1, 1, 1, 2}, {2.0, 4.0}), st);
  CHECK(y.value()[0] == doctest::Approx(1.0));
  CHECK(y.value()[1] == doctest::Approx(1.0 + 3.0 * 2.0 / std::sqrt(4.0 + 1e-5)));
}

TEST_CASE("prelu, avgpool, texture energy, fully connected, sigmoid") {
  const T x = T::from({1, 2, 2, 2}, {-1, 2, -3, 4, 5, -6, 7, -8});
  const T a = T::from({2}, {0.5, 0.25});
  const T p = prelu(x, a);
  CHECK(p.value()[0] == -0.5);
  CHECK(p.value()[1] == 2);
  CHECK(p.value()[5] == -1.5);

  const T pooled = avgpool2d(x, {2, 2});
  REQUIRE(pooled.shape() == Shape{1, 2, 1, 1});
  CHECK(pooled.value()[0] == doctest::Approx(0.5));
  CHECK(pooled.value()[1] == doctest::Approx(-0.5));
  CHECK_THROWS_AS(avgpool2d(T::zeros({1, 1, 3, 2}), {2, 2}), ShapeError);

  const T e = texture_energy(x);
  REQUIRE(e.shape() == Shape{1, 2});
  CHECK(e.value()[0] == doctest::Approx(2.5));
  CHECK(e.value()[1] == doctest::Approx(6.5));

  const T fx = T::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const T fw = T::from({3, 1}, {1, 0, -1});
  const T fb = T::from({1}, {0.5});
  const T f = fully_connected(fx, fw, fb);
  CHECK(f.value()[0] == doctest::Approx(-1.5));
  CHECK(f.value()[1] == doctest::Approx(-1.5));

  const T s = sigmoid(T::from({3}, {-50.0, 0.0, 50.0}));
  CHECK(s.value()[1] == 0.5);
  CHECK(s.value()[0] > 0.0);
  CHECK(s.value()[2] <= 1.0);
}

TEST_CASE("texture energy is invariant to spatial permutation") {
  const Array<double> v = random_values(2 * 3 * 4 * 5, 8);
  Array<double> flipped(v.size());
  for (Index p = 0; p < 6; ++p)
    for (Index i = 0; i < 20; ++i) flipped[p * 20 + i] = v[p * 20 + 19 - i];
  const T a = texture_energy(T::from({2, 3, 4, 5}, v));
  const T b = texture_energy(T::from({2, 3, 4, 5}, flipped));
  for (Index i = 0; i < 6; ++i) CHECK(a.value()[i] == doctest::Approx(b.value()[i]).epsilon(1e-14));
}

}  // TEST_SUITE
