#include "teleguard/eval/separation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "teleguard/common/errors.hpp"

namespace teleguard::eval {

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based average
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(negatives));
}

SeparationReport score_separation(std::span<const data::Trajectory> trajectories,
                                  const learn::CriticModel& critic, int horizon,
                                  int aligned_length) {
  SeparationReport r;
  r.aligned_q.assign(aligned_length, 0.0);
  r.aligned_count.assign(aligned_length, 0);
  std::vector<double> p_fail;
  std::vector<std::uint8_t> labels;
  double sum_success = 0.0, sum_tail = 0.0;
  for (const auto& traj : trajectories) {
    const int T = traj.length();
    if (T == 0) continue;
    Eigen::MatrixXd obs(critic.obs_dim(), T), act(critic.act_dim(), T);
    for (int t = 0; t < T; ++t) {
      obs.col(t) = traj.observations[t];
      act.col(t) = traj.commands[t];
    }
    const Eigen::RowVectorXd q = critic.q_values(obs, act);
    const Eigen::RowVectorXd z = critic.failure_logits(obs, act);
    const auto y = data::short_horizon_labels(traj.outcome, T, horizon);
    const bool failed = traj.outcome == data::Outcome::kFailure;
    for (int t = 0; t < T; ++t) {
      const double qn = critic.normalize(q[t]);
      p_fail.push_back(1.0 / (1.0 + std::exp(-z[t])));
      labels.push_back(y[t]);
      if (!failed) {
        sum_success += qn;
        ++r.success_states;
      } else {
        const int before = T - t;  // steps until the latch
        if (before <= horizon) {
          sum_tail += qn;
          ++r.failure_tail_states;
        }
        const int k = before - 1;
        if (k < aligned_length) {
          r.aligned_q[k] += qn;
          ++r.aligned_count[k];
        }
      }
    }
  }
  if (r.success_states > 0) r.mean_q_success = sum_success / r.success_states;
  if (r.failure_tail_states > 0) r.mean_q_failure_tail = sum_tail / r.failure_tail_states;
  for (int k = 0; k < aligned_length; ++k) {
    if (r.aligned_count[k] > 0) r.aligned_q[k] /= r.aligned_count[k];
  }
  r.auc = roc_auc(p_fail, labels);
  return r;
}

}  // namespace teleguard::eval
