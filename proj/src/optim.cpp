#include "texmatch/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace texmatch {

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Tensor<Scalar>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0) || cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1 || !(cfg_.eps > 0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
  for (const auto& p : params_) {
    m_.push_back(Eigen::ArrayXd::Zero(p.numel()));
    v_.push_back(Eigen::ArrayXd::Zero(p.numel()));
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw std::logic_error("Adam step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Eigen::ArrayXd g = params_[i].grad().template cast<double>();
    m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g.square();
    const Eigen::ArrayXd update = cfg_.lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + cfg_.eps);
    Array<Scalar>& w = params_[i].mutable_value();
    w = (w.template cast<double>() - update).template cast<Scalar>();
  }
}

template <typename Scalar>
void Adam<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace texmatch
