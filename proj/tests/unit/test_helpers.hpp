#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "teleguard/data/trajectory.hpp"

namespace teleguard::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("teleguard_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Random-valued trajectory with consistent labels.
inline data::Trajectory synthetic_trajectory(data::Outcome outcome, int length, int obs_dim,
                                             int act_dim, std::uint64_t seed, int horizon = 10) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  data::Trajectory t;
  for (int i = 0; i <= length; ++i) {
    Eigen::VectorXd o(obs_dim);
    for (auto& v : o) v = n(rng);
    t.observations.push_back(o);
  }
  for (int i = 0; i < length; ++i) {
    Eigen::VectorXd a(act_dim);
    for (auto& v : a) v = 0.01 * n(rng);
    t.commands.push_back(a);
  }
  t.outcome = outcome;
  t.rewards = data::broadcast_rewards(outcome, length);
  t.fail_labels = data::short_horizon_labels(outcome, length, horizon);
  t.meta.episode_seed = seed;
  t.meta.operator_kind = "expert";
  t.meta.horizon = horizon;
  t.meta.failure_cause =
      outcome == data::Outcome::kFailure ? sim::FailureCause::kJam : sim::FailureCause::kNone;
  return t;
}

}  // namespace teleguard::testing

namespace teleguard::testing {

// Three-state, two-action chain embedded in the default world's dimensions
// (obs 9, act 2). The state is one-hot in obs[0..2]; the action is
// (+-command_max, 0). Every (s, a) cell has a single successor cell and outcome:
//   success: (0,R) -> (1,R) -> (2,R) -> end
//   failure: (0,L) -> (2,L) -> end
//   failure: (1,L) -> end
struct ChainStep {
  int state;
  int action;  // 0 = L, 1 = R
};

inline data::Trajectory chain_trajectory(const std::vector<ChainStep>& steps, data::Outcome outcome,
                                         int terminal_state, double command_max,
                                         std::uint64_t seed, int horizon = 10) {
  auto one_hot = [](int s) {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(9);
    o[s] = 1.0;
    return o;
  };
  data::Trajectory t;
  for (const auto& st : steps) {
    t.observations.push_back(one_hot(st.state));
    Eigen::VectorXd a = Eigen::VectorXd::Zero(2);
    a[0] = st.action == 1 ? command_max : -command_max;
    t.commands.push_back(a);
  }
  t.observations.push_back(one_hot(terminal_state));
  const int T = static_cast<int>(steps.size());
  t.outcome = outcome;
  t.rewards = data::broadcast_rewards(outcome, T);
  t.fail_labels = data::short_horizon_labels(outcome, T, horizon);
  t.meta.episode_seed = seed;
  t.meta.operator_kind = "expert";
  t.meta.horizon = horizon;
  t.meta.failure_cause =
      outcome == data::Outcome::kFailure ? sim::FailureCause::kJam : sim::FailureCause::kNone;
  return t;
}

// `copies` repetitions of the three chain episodes.
inline std::vector<data::Trajectory> tabular_chain(int copies, double command_max = 0.1) {
  std::vector<data::Trajectory> out;
  for (int k = 0; k < copies; ++k) {
    out.push_back(chain_trajectory({{0, 1}, {1, 1}, {2, 1}}, data::Outcome::kSuccess, 2,
                                   command_max, 3 * k));
    out.push_back(chain_trajectory({{0, 0}, {2, 0}}, data::Outcome::kFailure, 2, command_max,
                                   3 * k + 1));
    out.push_back(chain_trajectory({{1, 0}}, data::Outcome::kFailure, 1, command_max, 3 * k + 2));
  }
  return out;
}

inline int chain_cell(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) {
  int s = 0;
  obs.head(3).maxCoeff(&s);
  return 2 * s + (action[0] > 0 ? 1 : 0);
}

// Value iteration on the empirical SARSA backup of the table's rows, cell by
// cell: Q(c) = mean over rows in c of [terminal ? r_T : r + gamma Q(c')].
inline std::array<double, 6> chain_dp_oracle(const data::TransitionTable& table, double gamma,
                                             bool absorbing) {
  std::array<double, 6> q{};
  for (int iter = 0; iter < 2000; ++iter) {
    std::array<double, 6> sum{}, count{};
    for (std::size_t i = 0; i < table.size(); ++i) {
      const int c = chain_cell(table.obs.col(i), table.actions.col(i));
      const double r = table.rewards[i];
      double y;
      if (table.terminal[i] > 0.5) {
        y = absorbing ? r / (1.0 - gamma) : r;
      } else {
        y = r + gamma * q[chain_cell(table.next_obs.col(i), table.next_actions.col(i))];
      }
      sum[c] += y;
      count[c] += 1;
    }
    for (int c = 0; c < 6; ++c) q[c] = count[c] > 0 ? sum[c] / count[c] : 0.0;
  }
  return q;
}

}  // namespace teleguard::testing

namespace teleguard::testing {

// Worst per-component relative error of `analytic` against central
// differences of f around x, |a - fd| / max(|a|, |fd|, floor). The floor keeps
// components whose true value is ~0 from amplifying rounding noise.
template <typename F>
double finite_difference_error(F&& f, const Eigen::VectorXd& x, const Eigen::VectorXd& analytic,
                               double h = 1e-5, double floor = 1e-3) {
  double worst = 0.0;
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    p[i] = x[i] + h;
    const double up = f(p);
    p[i] = x[i] - h;
    const double down = f(p);
    p[i] = x[i];
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), floor});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

}  // namespace teleguard::testing
