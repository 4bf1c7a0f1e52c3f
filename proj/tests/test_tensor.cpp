#include "texmatch/ops.hpp"
#include "texmatch/reference.hpp"
#include "texmatch/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace texmatch;
using T = Tensor<double>;

TEST_SUITE("tensor") {

TEST_CASE("shape bookkeeping") {
  CHECK(Shape{}.numel() == 1);
  CHECK(Shape{2, 3, 4}.numel() == 24);
  CHECK(Shape{2, 3, 4}.rank() == 3);
  const T t = T::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at({1, 2}) == 6);
  CHECK(t.at({0, 1}) == 2);
  CHECK_THROWS_AS(T::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(T::from({2, 3}, {1, 2, 3, 4, 5, 6}).item(), ShapeError);
}

TEST_CASE("broadcasting is limited to scalars and rejects mismatched shapes") {
  const T a = T::from({2, 2}, {1, 2, 3, 4});
  const T s = T::scalar(10);
  const T r = a + s;
  CHECK(r.value()[3] == 14);
  CHECK((s * a).value()[1] == 20);
  CHECK_THROWS_AS(a + T::from({4}, {1, 2, 3, 4}), ShapeError);
}

TEST_CASE("backward of sum(x * x) is 2x") {
  T x = T::parameter({3}, Array<double>::LinSpaced(3, -1, 1));
  backward(sum(x * x));
  CHECK(x.grad()[0] == doctest::Approx(-2));
  CHECK(x.grad()[1] == doctest::Approx(0));
  CHECK(x.grad()[2] == doctest::Approx(2));
}

TEST_CASE("gradients accumulate until zeroed") {
  T x = T::parameter({2}, Array<double>::Constant(2, 3.0));
  backward(sum(scale(x, 2.0)));
  backward(sum(scale(x, 2.0)));
  CHECK(x.grad()[0] == 4.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("shared subexpressions receive the sum of both paths") {
  T x = T::parameter({1}, Array<double>::Constant(1, 2.0));
  const T y = x * x;
  backward(sum(y + y));  // d/dx 2x^2 = 4x
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("no-grad mode builds no graph") {
  T x = T::parameter({2}, Array<double>::Ones(2));
  {
    NoGradGuard g;
    CHECK_FALSE(grad_mode_enabled());
    CHECK_FALSE((x * x).requires_grad());
  }
  CHECK(grad_mode_enabled());
  CHECK((x * x).requires_grad());
}

TEST_CASE("backward needs a scalar that depends on a parameter") {
  const T c = T::from({1}, {1.0});
  CHECK_THROWS(backward(c));
  T x = T::parameter({2}, Array<double>::Ones(2));
  CHECK_THROWS_AS(backward(x * x), ShapeError);
}

TEST_CASE("log and sqrt reject negative input") {
  CHECK_THROWS_AS(log(T::from({1}, {-1.0})), NumericError);
  CHECK_THROWS_AS(sqrt(T::from({1}, {-1e-12})), NumericError);
  CHECK(sqrt(T::from({1}, {0.0})).item() == 0.0);
}

TEST_CASE("matmul and mean agree with loop references") {
  Rng rng(3, Stream::test);
  Array<double> a(12), b(20);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  const T ta = T::from({3, 4}, a), tb = T::from({4, 5}, b);
  const auto ref = reference::matmul(reference::Vec(a.data(), a.data() + 12), reference::Vec(b.data(), b.data() + 20), 3, 4, 5);
  const T m = matmul(ta, tb);
  for (Index i = 0; i < 15; ++i) CHECK(m.value()[i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-12));

  const auto mref = reference::mean_axis(reference::Vec(a.data(), a.data() + 12), {3, 4}, 0);
  const T mm = mean(ta, {0});
  REQUIRE(mm.shape() == Shape{4});
  for (Index i = 0; i < 4; ++i) CHECK(mm.value()[i] == doctest::Approx(mref[static_cast<std::size_t>(i)]));
}

TEST_CASE("reshape keeps values and rejects a different element count") {
  const T a = T::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const T r = reshape(a, {3, 2});
  CHECK(r.at({2, 1}) == 6);
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
}

TEST_CASE("detach cuts the graph") {
  T x = T::parameter({1}, Array<double>::Constant(1, 3.0));
  const T y = detach(x) * x;
  backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42, Stream::init), b(42, Stream::init), c(42, Stream::noise);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    seen.insert(x);
  }
  CHECK(seen.size() == 100);
  Rng a2(42, Stream::init);
  CHECK(a2() != c());

  Rng r(1, Stream::test);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
  const Rng parent(5, Stream::data);
  Rng d1 = parent.derive(3), d2 = parent.derive(3), d3 = parent.derive(4);
  CHECK(d1() == d2());
  CHECK(parent.derive(3)() != d3());
}

TEST_CASE("normal draws have unit variance") {
  Rng r(9, Stream::test);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

}  // TEST_SUITE
