#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "teleguard/common/random.hpp"
#include "teleguard/data/trajectory.hpp"

namespace teleguard::data {

// All transitions of a dataset, one column per transition.
struct TransitionTable {
  int obs_dim = 0;
  int act_dim = 0;
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd next_obs;
  Eigen::MatrixXd next_actions;  // a_{t+1} from the same trajectory; zero on terminal rows
  Eigen::VectorXd rewards;
  Eigen::VectorXd fail_labels;
  Eigen::VectorXd terminal;  // 1 on the last step of each trajectory
  std::vector<int> trajectory_index;
  std::vector<int> step_index;
  std::vector<std::uint8_t> from_success;

  std::size_t size() const { return static_cast<std::size_t>(obs.cols()); }

  // Labels are recomputed for `horizon` (they only depend on outcome and length).
  static TransitionTable from_trajectories(std::span<const Trajectory> trajectories, int horizon);
};

struct TransitionBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd next_obs;
  Eigen::MatrixXd next_actions;
  Eigen::VectorXd rewards;
  Eigen::VectorXd fail_labels;
  Eigen::VectorXd terminal;
  std::vector<std::size_t> rows;

  int size() const { return static_cast<int>(obs.cols()); }
};

enum class SamplingMode { kUniform, kClassBalanced };

struct SamplerOptions {
  SamplingMode mode = SamplingMode::kUniform;
  bool with_replacement = true;
};

// Uniform: every transition equally likely. Class-balanced: ceil(B/2) rows from
// failure trajectories, the rest from successes, uniform within each class
// (always with replacement). Without replacement B must not exceed the table.
std::vector<std::size_t> sample_rows(const TransitionTable& table, int batch_size, Rng& rng,
                                     const SamplerOptions& options = {});

TransitionBatch gather(const TransitionTable& table, std::span<const std::size_t> rows);

TransitionBatch sample_batch(const TransitionTable& table, int batch_size, Rng& rng,
                             const SamplerOptions& options = {});

}  // namespace teleguard::data
