#include "texmatch/ops.hpp"
#include "texmatch/reference.hpp"

#include <doctest.h>

using namespace texmatch;
using namespace texmatch::reference;

namespace {

void require_all(const std::vector<CheckResult>& results) {
  REQUIRE_FALSE(results.empty());
  for (const auto& r : results) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }
}

}  // namespace

TEST_SUITE("reference") {

TEST_CASE("gradient suite") { require_all(gradient_suite()); }
TEST_CASE("loss identity suite") { require_all(loss_identity_suite()); }
TEST_CASE("metric suite") { require_all(metric_suite()); }
TEST_CASE("protocol suite") { require_all(protocol_suite()); }
TEST_CASE("checkpoint suite") { require_all(checkpoint_suite()); }
TEST_CASE("oracle suite") { require_all(oracle_suite()); }

TEST_CASE("an injected gradient fault is detected by every gradient case") {
  SuiteOptions o;
  o.inject_gradient_fault = true;
  o.cases = 3;
  const auto results = gradient_suite(o);
  REQUIRE_FALSE(results.empty());
  for (const auto& r : results) {
    INFO(r.name);
    CHECK_FALSE(r.passed);
  }
}

TEST_CASE("the gradient checker measures relative error") {
  Tensor<double> x = Tensor<double>::parameter({3}, Array<double>::LinSpaced(3, 0.5, 1.5));
  const GradCheck ok = check_gradients([&] { return sum(x * x * x); }, {x});
  CHECK(ok.checked == 3);
  CHECK(ok.max_rel_error < 1e-8);
  const GradCheck bad = check_gradients([&] { return sum(x * x * x); }, {x}, 1e-5, 1e-6, 0.01);
  CHECK(bad.max_rel_error > 0.005);
}

}  // TEST_SUITE
