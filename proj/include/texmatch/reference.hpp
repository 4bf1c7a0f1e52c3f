#pragma once

// Independent reference implementations used to check the library: plain
// loops over std::vector<double>, no shared code with the optimized kernels.
// Also the verification suites run by the tests, the acceptance binary and
// `texmatch verify`.

#include "texmatch/eval.hpp"
#include "texmatch/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace texmatch::reference {

using Vec = std::vector<double>;

Vec matmul(const Vec& a, const Vec& b, Index n, Index k, Index m);

/// x: N x C x H x W, w: O x C x kh x kw.
Vec conv2d(const Vec& x, const Vec& w, const Vec& bias, Index n, Index c, Index h, Index wd, Index o, Index kh,
           Index kw, Index sh, Index sw, Index ph, Index pw);

/// x: N x C x H x W, w: C x O x kh x kw (scatter form).
Vec conv_transpose2d(const Vec& x, const Vec& w, const Vec& bias, Index n, Index c, Index h, Index wd, Index o,
                     Index kh, Index kw, Index sh, Index sw, Index ph, Index pw);

/// Mean over one axis of a row-major tensor.
Vec mean_axis(const Vec& a, const std::vector<Index>& shape, Index axis);

/// Per-channel mean |x| over H x W.
Vec texture_energy(const Vec& x, Index n, Index c, Index h, Index w);

/// Window-by-window SSIM with an explicitly built 2-D Gaussian kernel.
double ssim(const Vec& x, const Vec& y, Index planes, Index h, Index w, Index window, double sigma, double c1,
            double c2);

/// Per-sample I I^T of N x H x W planes (optionally divided by W).
Vec gram(const Vec& x, Index n, Index h, Index w, bool normalize);

/// Trajectory of a textbook scalar Adam on f(w) = (w - target)^2.
Vec adam_quadratic(double w0, double target, int steps, double lr, double beta1, double beta2, double eps);

/// Brute-force EER: every candidate threshold (distinct scores and midpoints)
/// is scored by counting; smallest threshold wins ties.
EerPoint eer(const ScoreSet& s);

/// FRR(FAR) integrated on a uniform grid of `cells` midpoints along the DET
/// polyline built by counting at every distinct threshold.
double det_auc_grid(const ScoreSet& s, long cells);

// ---------------------------------------------------------------------------
// Finite differences.

struct GradCheck {
  double max_rel_error = 0;
  Index checked = 0;
  Index refined = 0;  ///< partials re-estimated with a 100x smaller step
};

/// Partials whose relative error exceeds this are re-estimated with eps / 100
/// and the smaller error is kept.
inline constexpr double kRefineAbove = 1e-5;

/// Central differences of `loss` with respect to every element of `params`,
/// compared against the analytic gradient from backward(). Relative error is
/// |a - n| / max(|a|, |n|, floor). A nonzero `fault` scales the analytic
/// gradient by (1 + fault) before comparing.
GradCheck check_gradients(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params,
                          double eps = 1e-5, double floor = 1e-6, double fault = 0.0);

// ---------------------------------------------------------------------------
// Suites.

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 7;
  /// Perturbs analytic gradients so the gradient suite must fail; proves the
  /// checker can see an error.
  bool inject_gradient_fault = false;
  Index cases = 20;
};

/// Every differentiable op and both composite losses, >= options.cases random
/// cases each, 64-bit, eps 1e-5, threshold 1e-4.
std::vector<CheckResult> gradient_suite(const SuiteOptions& options = {});
/// SSIM/relational identities and objective degeneracies.
std::vector<CheckResult> loss_identity_suite(const SuiteOptions& options = {});
/// EER/AUC against the brute-force oracles on 100 random score sets plus
/// monotone-transform invariance.
std::vector<CheckResult> metric_suite(const SuiteOptions& options = {});
/// All-vs-all counts and balanced pair batches.
std::vector<CheckResult> protocol_suite(const SuiteOptions& options = {});
/// Checkpoint serialization round trips and Stage-1 to Stage-2 encoder transfer.
std::vector<CheckResult> checkpoint_suite(const SuiteOptions& options = {});
/// Layer forward passes against the loop oracles.
std::vector<CheckResult> oracle_suite(const SuiteOptions& options = {});

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace texmatch::reference
