#pragma once

#include "texmatch/tensor.hpp"

#include <utility>

namespace texmatch {

struct ConvSpec {
  Index in_channels = 1;
  Index out_channels = 1;
  std::pair<Index, Index> kernel{3, 3};
  std::pair<Index, Index> stride{1, 1};
  std::pair<Index, Index> padding{0, 0};
  bool transposed = false;

  /// Forward: floor((H + 2p - k) / s) + 1. Transposed: (H - 1) s - 2p + k.
  /// Throws when the result would be < 1.
  std::pair<Index, Index> output_extent(Index height, Index width) const;
};

enum class Mode { train, eval };

/// Per-channel affine parameters plus running statistics. The statistics are
/// leaf tensors without gradients so they travel through checkpoints by name.
template <typename Scalar>
struct BatchNormState {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);
  Mode mode = Mode::train;

  static BatchNormState create(Index channels);
};

/// Cross-correlation (no kernel flip). weights: out x in x kh x kw, bias: out.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weights, const Tensor<Scalar>& bias,
                      const ConvSpec& spec);

/// Adjoint of conv2d with respect to its input. weights: in x out x kh x kw.
template <typename Scalar>
Tensor<Scalar> conv_transpose2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                                const Tensor<Scalar>& bias, const ConvSpec& spec);

/// Train mode standardizes with batch statistics and updates the running ones;
/// eval mode applies the running statistics.
template <typename Scalar>
Tensor<Scalar> batchnorm2d(const Tensor<Scalar>& x, BatchNormState<Scalar>& state);

/// y = x for x >= 0, slope[c] * x otherwise; channel is axis 1.
template <typename Scalar>
Tensor<Scalar> prelu(const Tensor<Scalar>& x, const Tensor<Scalar>& slopes);

/// Non-overlapping mean pooling; spatial extents must divide by the window.
template <typename Scalar>
Tensor<Scalar> avgpool2d(const Tensor<Scalar>& x, std::pair<Index, Index> window);

/// Texture energy: per-channel mean of |x| over the spatial extent, N x C x H x W -> N x C.
template <typename Scalar>
Tensor<Scalar> texture_energy(const Tensor<Scalar>& x);

/// x: N x D, weights: D x K, bias: K.
template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& x, const Tensor<Scalar>& weights,
                               const Tensor<Scalar>& bias);

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);

}  // namespace texmatch
