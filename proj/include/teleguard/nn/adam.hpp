#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace teleguard::nn {

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(Eigen::Index num_parameters, double learning_rate);
};

// Bias-corrected Adam update in place. A non-finite gradient throws
// DivergenceError and leaves params and state untouched.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state);

}  // namespace teleguard::nn
