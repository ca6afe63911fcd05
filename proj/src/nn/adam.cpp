#include "teleguard/nn/adam.hpp"

#include <cmath>

#include "teleguard/common/errors.hpp"

namespace teleguard::nn {

AdamState AdamState::zeros(Eigen::Index num_parameters, double learning_rate) {
  AdamState s;
  s.first_moment = Eigen::VectorXd::Zero(num_parameters);
  s.second_moment = Eigen::VectorXd::Zero(num_parameters);
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ValidationError("adam_step: parameter, gradient and moment shapes differ");
  }
  if (!grads.allFinite()) throw DivergenceError("adam_step: non-finite gradient");
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

}  // namespace teleguard::nn
