#pragma once

#include "texmatch/tensor.hpp"

#include <cstdint>
#include <vector>

namespace texmatch {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list. Moments are kept in double
/// whatever the parameter precision.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Tensor<Scalar>> params, AdamConfig cfg = {});

  /// Throws std::logic_error when a parameter has no gradient buffer.
  void step();
  void zero_grad();

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  std::vector<Eigen::ArrayXd> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace texmatch
