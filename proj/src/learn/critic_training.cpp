#include <cmath>

#include <spdlog/spdlog.h>

#include "teleguard/common/errors.hpp"
#include "teleguard/learn/critic.hpp"
#include "teleguard/nn/adam.hpp"

namespace teleguard::learn {

CriticTrainingResult train_critic(const data::TransitionTable& table, const CriticConfig& config,
                                  double command_max) {
  config.validate();
  if (table.size() == 0) throw ValidationError("train_critic: empty transition table");

  CriticTrainingResult result;
  double failure_rows = table.fail_labels.sum();
  bool any_failure_traj = false;
  for (auto s : table.from_success) any_failure_traj |= (s == 0);
  if (!any_failure_traj || failure_rows == 0) {
    result.missing_failures = true;
    spdlog::warn("train_critic: dataset has no failure transitions; failure head gets no positives");
  }

  Rng rng(derive_seed(config.seed, 11));
  CriticModel model = CriticModel::create(table.obs_dim, table.act_dim, command_max,
                                          FeatureScaler::fit(table.obs), config.hidden_units, rng);
  model.horizon = config.horizon;
  model.gamma = config.gamma;

  Eigen::VectorXd params = model.parameters();
  nn::AdamState adam = nn::AdamState::zeros(params.size(), config.learning_rate);
  const CriticLossWeights weights{config.alpha, config.lambda_fail};
  Eigen::VectorXd grad;

  for (int step = 0; step < config.training_steps; ++step) {
    if (step % config.target_period == 0) model.sync_target();
    const data::TransitionBatch batch = data::sample_batch(table, config.batch_size, rng);
    const Eigen::VectorXd y = td_target(batch, model, config.gamma, config.absorbing_terminal);
    Eigen::MatrixXd ood;
    if (config.alpha > 0) {
      ood = sample_ood_actions(table.act_dim, batch.size(), config.num_ood_samples, command_max,
                               rng);
    }
    const CriticLossTerms terms = critic_loss(model, batch, y, ood, weights, &grad);
    if (!std::isfinite(terms.total)) {
      throw DivergenceError("critic loss became non-finite at step " + std::to_string(step));
    }
    adam_step(params, grad, adam);
    model.set_parameters(params);
    if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.training_steps)) {
      result.log.push_back({step, terms});
      spdlog::info("critic step {} td={:.4f} penalty={:.4f} bce={:.4f} total={:.4f}", step,
                   terms.td, terms.penalty, terms.bce, terms.total);
    }
  }
  model.sync_target();
  model.calibrate(table.obs, table.actions, table.from_success, config.low_percentile,
                  config.high_percentile, config.threshold_percentile);
  const Calibration& c = model.calibration();
  spdlog::info("critic calibration q_min={:.4f} q_max={:.4f} threshold={:.4f}", c.q_min, c.q_max,
               c.threshold);
  result.model = std::move(model);
  return result;
}

}  // namespace teleguard::learn
