#pragma once

#include "texmatch/rng.hpp"
#include "texmatch/tensor.hpp"

namespace texmatch {

/// Weights and constants of the Stage-1 objectives.
struct LossConfig {
  double alpha = 0.5;  ///< weight of the reconstruction term; (1 - alpha) goes to the Gram term
  Index ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  bool gram_normalize = true;  ///< divide I I^T by the column count
  double noise_sigma = 0.25;

  void validate() const;
};

/// 1 - mean SSIM over the valid window positions of every plane. Gaussian
/// window, unit dynamic range. Result lies in [0, 2].
template <typename Scalar>
Tensor<Scalar> ssim_loss(const Tensor<Scalar>& x, const Tensor<Scalar>& y, const LossConfig& cfg);

/// Mean SSIM (no graph); used for reporting reconstruction quality.
template <typename Scalar>
double ssim(const Tensor<Scalar>& x, const Tensor<Scalar>& y, const LossConfig& cfg);

/// Per-sample row-relation matrix I I^T of an N x 1 x H x W batch, shape N x H x H.
template <typename Scalar>
Tensor<Scalar> gram(const Tensor<Scalar>& x, bool normalize);

template <typename Scalar>
Tensor<Scalar> mse_loss(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// alpha * (1 - SSIM(I, Î)) + (1 - alpha) * MSE(I I^T, Î Î^T).
template <typename Scalar>
Tensor<Scalar> relational_loss(const Tensor<Scalar>& target, const Tensor<Scalar>& reconstruction,
                               const LossConfig& cfg);

/// Same formula as relational_loss. The reconstruction is expected to come from a
/// corrupted input; that is the trainer's responsibility.
template <typename Scalar>
Tensor<Scalar> denoising_relational_loss(const Tensor<Scalar>& target,
                                         const Tensor<Scalar>& reconstruction_from_noisy,
                                         const LossConfig& cfg);

/// I + N(0, sigma) per pixel, unclamped. sigma == 0 returns I unchanged.
template <typename Scalar>
Tensor<Scalar> corrupt(const Tensor<Scalar>& images, double sigma, Rng& rng);

/// Mean binary cross-entropy with scores clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
Tensor<Scalar> bce_loss(const Tensor<Scalar>& scores, const Tensor<Scalar>& targets);

inline constexpr double kBceClamp = 1e-7;

}  // namespace texmatch
