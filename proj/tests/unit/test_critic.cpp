#include <gtest/gtest.h>

#include <cmath>

#include "teleguard/common/errors.hpp"
#include "teleguard/learn/critic.hpp"
#include "test_helpers.hpp"

namespace teleguard::learn {
namespace {

using data::Outcome;
using testing::synthetic_trajectory;

data::TransitionTable small_table(std::uint64_t seed, int n = 12) {
  std::vector<data::Trajectory> trajs;
  for (int i = 0; i < n; ++i) {
    trajs.push_back(synthetic_trajectory(i % 2 ? Outcome::kFailure : Outcome::kSuccess, 8 + i % 5,
                                         9, 2, seed * 100 + i));
  }
  return data::TransitionTable::from_trajectories(trajs, 10);
}

CriticModel random_critic(const data::TransitionTable& table, std::uint64_t seed, int hidden = 16) {
  Rng rng(seed);
  CriticModel m = CriticModel::create(9, 2, 0.1, FeatureScaler::fit(table.obs), hidden, rng);
  // A non-zero failure head so its gradient path is exercised away from the
  // symmetric start.
  Eigen::VectorXd p = m.parameters();
  std::normal_distribution<double> n(0.0, 0.3);
  const auto nf = m.fail_head().num_parameters();
  for (Eigen::Index i = p.size() - nf; i < p.size(); ++i) p[i] = n(rng);
  m.set_parameters(p);
  return m;
}

TEST(CriticConfig, Validation) {
  CriticConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = CriticConfig{};
  c.alpha = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = CriticConfig{};
  c.target_period = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = CriticConfig{};
  c.num_ood_samples = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(CriticConfig, RoundTrip) {
  CriticConfig c;
  c.alpha = 1.5;
  c.absorbing_terminal = false;
  ConfigMap m;
  c.to_config(m);
  const auto back = CriticConfig::from_config(m);
  EXPECT_EQ(back.alpha, 1.5);
  EXPECT_FALSE(back.absorbing_terminal);
  m.ensure_all_consumed();
}

TEST(TdTarget, TerminalFailureRow) {
  const auto table = small_table(1);
  Rng rng(0);
  const CriticModel m = random_critic(table, 1);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.terminal[i] > 0.5 && !table.from_success[i]) rows.push_back(i);
  }
  ASSERT_FALSE(rows.empty());
  const auto batch = data::gather(table, rows);
  const auto y = td_target(batch, m, 0.98, false);
  for (int i = 0; i < batch.size(); ++i) EXPECT_EQ(y[i], -1.0);
  const auto y_abs = td_target(batch, m, 0.98, true);
  for (int i = 0; i < batch.size(); ++i) EXPECT_NEAR(y_abs[i], -50.0, 1e-12);
}

TEST(TdTarget, ZeroDiscountGivesReward) {
  const auto table = small_table(2);
  const CriticModel m = random_critic(table, 2);
  Rng rng(1);
  const auto batch = data::sample_batch(table, 64, rng);
  const auto y = td_target(batch, m, 0.0, false);
  EXPECT_EQ(y, batch.rewards);
}

TEST(TdTarget, NonTerminalUsesTargetCopyAndDataNextAction) {
  const auto table = small_table(3);
  CriticModel m = random_critic(table, 3);
  Rng rng(2);
  const auto batch = data::sample_batch(table, 32, rng);
  const Eigen::RowVectorXd before = m.q_values(batch.next_obs, batch.next_actions);
  // Moving the live head must not change targets until the next sync.
  m.mutable_q_head().mutable_layer(0).bias[0] += 3.0;
  const auto y = td_target(batch, m, 0.9, true);
  for (int i = 0; i < batch.size(); ++i) {
    if (batch.terminal[i] < 0.5) EXPECT_NEAR(y[i], batch.rewards[i] + 0.9 * before[i], 1e-12);
  }
  m.sync_target();
  const auto y2 = td_target(batch, m, 0.9, true);
  for (int i = 0; i < batch.size(); ++i) {
    if (batch.terminal[i] < 0.5) EXPECT_NEAR(y2[i], y[i] + 0.9 * 3.0, 1e-9);
  }
}

TEST(LogMeanExp, MatchesDirectFormula) {
  const std::vector<double> v{0.1, -2.0, 3.5, 0.0};
  double s = 0;
  for (double x : v) s += std::exp(x);
  EXPECT_NEAR(log_mean_exp(v), std::log(s / 4), 1e-14);
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(log_mean_exp(big), 1000.0, 1e-12);
}

TEST(CqlPenalty, ConstantCriticHasZeroPenalty) {
  const auto table = small_table(4);
  CriticModel m = random_critic(table, 4);
  auto& head = m.mutable_q_head().mutable_layer(0);
  head.weight.setZero();
  head.bias[0] = 2.5;
  Rng rng(3);
  const auto batch = data::sample_batch(table, 16, rng);
  const auto ood = sample_ood_actions(2, 16, 10, 0.1, rng);
  EXPECT_NEAR(cql_penalty(m, batch, ood), 0.0, 1e-14);
}

// With the OOD set an exhaustive grid over a 1-D action box, logmeanexp over
// {a_data} + grid approaches the exact grid log-mean-exp.
TEST(CqlPenalty, GridEstimateMatchesExactEnumeration) {
  std::vector<data::Trajectory> trajs;
  for (int i = 0; i < 4; ++i) trajs.push_back(synthetic_trajectory(Outcome::kSuccess, 5, 3, 1, i));
  const auto table = data::TransitionTable::from_trajectories(trajs, 10);
  Rng rng(5);
  const CriticModel m = CriticModel::create(3, 1, 1.0, FeatureScaler::fit(table.obs), 16, rng);
  const auto batch = data::sample_batch(table, 6, rng);
  const int K = 4000;
  Eigen::MatrixXd grid(1, static_cast<Eigen::Index>(K) * batch.size());
  for (int k = 0; k < K; ++k) {
    const double a = -1.0 + (k + 0.5) * 2.0 / K;
    for (int i = 0; i < batch.size(); ++i) grid(0, k * batch.size() + i) = a;
  }
  const double estimate = cql_penalty(m, batch, grid);
  double exact = 0.0;
  const Eigen::RowVectorXd q_data = m.q_values(batch.obs, batch.actions);
  for (int i = 0; i < batch.size(); ++i) {
    long double sum = 0.0L;
    for (int k = 0; k < K; ++k) {
      const double a = -1.0 + (k + 0.5) * 2.0 / K;
      const double q = m.q_values(batch.obs.col(i), Eigen::MatrixXd::Constant(1, 1, a))[0];
      sum += std::exp(static_cast<long double>(q));
    }
    exact += (static_cast<double>(std::log(sum / K)) - q_data[i]) / batch.size();
  }
  EXPECT_NEAR(estimate, exact, 1e-3);
}

TEST(FailureHead, UntrainedHeadLosesLn2) {
  const auto table = small_table(5);
  Rng rng(0);
  const CriticModel m = CriticModel::create(9, 2, 0.1, FeatureScaler::fit(table.obs), 16, rng);
  const auto batch = data::sample_batch(table, 50, rng);
  EXPECT_NEAR(failure_head_loss(m, batch), std::log(2.0), 1e-15);
}

TEST(FailureHead, HandComputedBce) {
  Eigen::Vector4d z(2.0, -1.0, 0.5, -3.0), y(1.0, 0.0, 0.0, 1.0);
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    expected -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  expected /= 4.0;
  EXPECT_NEAR(binary_cross_entropy_with_logits(z, y), expected, 1e-12);
}

TEST(FailureHead, PerfectSeparationDrivesLossToZero) {
  const Eigen::Vector4d y(1, 0, 1, 0), sign(1, -1, 1, -1);
  double previous = 1e9;
  for (double scale : {1.0, 5.0, 20.0, 100.0}) {
    const double loss = binary_cross_entropy_with_logits(scale * sign, y);
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-40);
}

TEST(CriticLoss, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto table = small_table(seed);
    CriticModel m = random_critic(table, seed);
    Rng rng(seed + 100);
    const auto batch = data::sample_batch(table, 12, rng);
    Eigen::VectorXd targets(batch.size());
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& t : targets) t = n(rng);
    const auto ood = sample_ood_actions(2, batch.size(), 10, 0.1, rng);
    const CriticLossWeights w{5.0, 1.0};
    const Eigen::VectorXd theta = m.parameters();
    Eigen::VectorXd grad;
    critic_loss(m, batch, targets, ood, w, &grad);
    ASSERT_EQ(grad.size(), theta.size());
    auto loss = [&](const Eigen::VectorXd& p) {
      CriticModel copy = m;
      copy.set_parameters(p);
      return critic_loss(copy, batch, targets, ood, w, nullptr).total;
    };
    EXPECT_LE(testing::finite_difference_error(loss, theta, grad), 1e-4) << "seed " << seed;

    Eigen::VectorXd g_pen, g_bce;
    cql_penalty(m, batch, ood, &g_pen);
    failure_head_loss(m, batch, &g_bce);
    auto pen = [&](const Eigen::VectorXd& p) {
      CriticModel copy = m;
      copy.set_parameters(p);
      return cql_penalty(copy, batch, ood);
    };
    auto bce = [&](const Eigen::VectorXd& p) {
      CriticModel copy = m;
      copy.set_parameters(p);
      return failure_head_loss(copy, batch);
    };
    EXPECT_LE(testing::finite_difference_error(pen, theta, g_pen), 1e-4) << "seed " << seed;
    EXPECT_LE(testing::finite_difference_error(bce, theta, g_bce), 1e-4) << "seed " << seed;
  }
}

TEST(CriticModel, ActionGradientMatchesFiniteDifferences) {
  const auto table = small_table(7);
  const CriticModel m = random_critic(table, 7);
  Rng rng(8);
  const auto batch = data::sample_batch(table, 5, rng);
  Eigen::MatrixXd grad;
  m.action_values(batch.obs, batch.actions, &grad);
  const double h = 1e-7;
  for (int i = 0; i < batch.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      Eigen::MatrixXd up = batch.actions, down = batch.actions;
      up(k, i) += h;
      down(k, i) -= h;
      const double fd = (m.q_values(batch.obs, up)[i] - m.q_values(batch.obs, down)[i]) / (2 * h);
      EXPECT_NEAR(grad(k, i), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Percentile, NumpyLinearRule) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 25), 1.75);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({5}, 99), 5.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 100), 10.0);
  EXPECT_THROW(percentile({}, 50), ValidationError);
}

TEST(Score, NormalizationEndpointsAndClip) {
  const auto table = small_table(9);
  CriticModel m = random_critic(table, 9);
  EXPECT_THROW(m.normalize(0.0), std::logic_error);
  m.set_calibration({true, -2.0, 6.0, 1.0});
  EXPECT_EQ(m.normalize(-2.0), 0.0);
  EXPECT_EQ(m.normalize(6.0), 1.0);
  EXPECT_EQ(m.normalize(16.0), 1.0);
  EXPECT_EQ(m.normalize(-100.0), 0.0);
  EXPECT_DOUBLE_EQ(m.normalize(2.0), 0.5);
  EXPECT_THROW(m.set_calibration({true, 1.0, 1.0, 1.0}), ValidationError);
  EXPECT_THROW(m.set_calibration({true, 0.0, 1.0, 2.0}), ValidationError);
}

TEST(Score, BoundedOverRandomInputs) {
  const auto table = small_table(10);
  CriticModel m = random_critic(table, 10);
  m.calibrate(table.obs, table.actions, table.from_success, 1, 99, 5);
  const auto& c = m.calibration();
  EXPECT_LT(c.q_min, c.q_max);
  EXPECT_GE(c.threshold, c.q_min);
  EXPECT_LE(c.threshold, c.q_max);
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    Eigen::VectorXd o(9), a(2);
    for (auto& v : o) v = n(rng);
    for (auto& v : a) v = 0.1 * std::tanh(n(rng));
    const Score s = m.score(o, a);
    EXPECT_GE(s.q_normalized, 0.0);
    EXPECT_LE(s.q_normalized, 1.0);
    EXPECT_GT(s.p_fail, 0.0);
    EXPECT_LT(s.p_fail, 1.0);
    EXPECT_EQ(s.feasible, s.q >= c.threshold);
  }
}

TEST(Calibrate, ConstantCriticStillOrdered) {
  const auto table = small_table(11);
  CriticModel m = random_critic(table, 11);
  m.mutable_q_head().mutable_layer(0).weight.setZero();
  m.calibrate(table.obs, table.actions, table.from_success, 1, 99, 5);
  EXPECT_LT(m.calibration().q_min, m.calibration().q_max);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto table = small_table(12);
  CriticModel m = random_critic(table, 12);
  m.calibrate(table.obs, table.actions, table.from_success, 1, 99, 5);
  m.dt = 0.02;
  const std::string bytes = m.serialize();
  const CriticModel back = CriticModel::deserialize(bytes);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.calibration(), m.calibration());
  EXPECT_EQ(back.dt, 0.02);
  EXPECT_THROW(CriticModel::deserialize(bytes.substr(0, bytes.size() - 5)), CorruptFileError);
  EXPECT_THROW(CriticModel::deserialize(bytes + "x"), CorruptFileError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(CriticModel::deserialize(bad), CorruptFileError);
}

CriticConfig chain_config(bool absorbing) {
  CriticConfig c;
  c.gamma = 0.9;
  c.alpha = 0.0;
  c.lambda_fail = 0.0;
  c.absorbing_terminal = absorbing;
  c.batch_size = 64;
  c.learning_rate = 1e-3;
  c.target_period = 100;
  c.training_steps = 6000;
  c.log_every = 0;
  return c;
}

void expect_matches_oracle(const CriticModel& m, const data::TransitionTable& table, double gamma,
                           bool absorbing) {
  const auto oracle = testing::chain_dp_oracle(table, gamma, absorbing);
  const Eigen::RowVectorXd q = m.q_values(table.obs, table.actions);
  std::array<bool, 6> seen{};
  for (std::size_t i = 0; i < table.size(); ++i) {
    const int c = testing::chain_cell(table.obs.col(i), table.actions.col(i));
    seen[c] = true;
    EXPECT_NEAR(q[i], oracle[c], 1e-2) << "cell " << c;
  }
  for (bool s : seen) EXPECT_TRUE(s);
}

TEST(TrainCritic, TabularChainMatchesDynamicProgramming) {
  const auto trajs = testing::tabular_chain(20);
  const auto table = data::TransitionTable::from_trajectories(trajs, 10);
  for (bool absorbing : {false, true}) {
    const auto result = train_critic(table, chain_config(absorbing), 0.1);
    expect_matches_oracle(result.model, table, 0.9, absorbing);
  }
  // Episodic values by hand: success chain 1, 1.9, 2.71; failures -1, -1.9, -1.
  const auto oracle = testing::chain_dp_oracle(table, 0.9, false);
  EXPECT_NEAR(oracle[1], 2.71, 1e-12);
  EXPECT_NEAR(oracle[3], 1.9, 1e-12);
  EXPECT_NEAR(oracle[5], 1.0, 1e-12);
  EXPECT_NEAR(oracle[0], -1.9, 1e-12);
  EXPECT_NEAR(oracle[4], -1.0, 1e-12);
  EXPECT_NEAR(oracle[2], -1.0, 1e-12);
}

TEST(TrainCritic, AllSuccessChainReachesGeometricValue) {
  std::vector<data::Trajectory> trajs;
  for (int k = 0; k < 20; ++k) {
    trajs.push_back(testing::chain_trajectory({{0, 1}, {1, 1}, {2, 1}}, Outcome::kSuccess, 2, 0.1, k));
  }
  const auto table = data::TransitionTable::from_trajectories(trajs, 10);
  const auto result = train_critic(table, chain_config(true), 0.1);
  EXPECT_TRUE(result.missing_failures);
  const Eigen::RowVectorXd q = result.model.q_values(table.obs, table.actions);
  for (Eigen::Index i = 0; i < q.size(); ++i) EXPECT_NEAR(q[i], 1.0 / (1.0 - 0.9), 1e-2);
}

TEST(TrainCritic, DeterministicGivenSeed) {
  const auto table = small_table(13);
  CriticConfig c;
  c.training_steps = 150;
  c.batch_size = 32;
  c.hidden_units = 16;
  c.log_every = 50;
  const auto a = train_critic(table, c, 0.1);
  const auto b = train_critic(table, c, 0.1);
  EXPECT_EQ(a.model.serialize(), b.model.serialize());
  EXPECT_EQ(a.log.size(), b.log.size());
  c.seed = 1;
  EXPECT_NE(train_critic(table, c, 0.1).model.serialize(), a.model.serialize());
}

TEST(TrainCritic, NonFiniteLossAborts) {
  auto table = small_table(14);
  table.rewards[0] = std::numeric_limits<double>::infinity();
  CriticConfig c;
  c.training_steps = 50;
  c.batch_size = static_cast<int>(table.size()) * 4;
  c.hidden_units = 8;
  c.log_every = 0;
  EXPECT_THROW(train_critic(table, c, 0.1), DivergenceError);
}

}  // namespace
}  // namespace teleguard::learn
