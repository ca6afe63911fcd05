#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "teleguard/data/trajectory.hpp"
#include "teleguard/learn/critic.hpp"

namespace teleguard::eval {

// Mann-Whitney estimate with average ranks for ties; 0.5 when a class is empty.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct SeparationReport {
  int success_states = 0;
  int failure_tail_states = 0;
  double mean_q_success = 0.0;       // mean normalized score over success trajectories
  double mean_q_failure_tail = 0.0;  // last `horizon` steps of failure trajectories
  double auc = 0.5;                  // p_fail vs the short-horizon label
  // aligned_q[k]: mean normalized score k steps before the failure latch.
  std::vector<double> aligned_q;
  std::vector<int> aligned_count;
};

// Scores every (observation, command) pair with the critic.
SeparationReport score_separation(std::span<const data::Trajectory> trajectories,
                                  const learn::CriticModel& critic, int horizon,
                                  int aligned_length = 50);

}  // namespace teleguard::eval
