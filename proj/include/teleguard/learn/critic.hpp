#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "teleguard/common/config_map.hpp"
#include "teleguard/common/random.hpp"
#include "teleguard/data/sampler.hpp"
#include "teleguard/learn/feature_scaler.hpp"
#include "teleguard/nn/mlp.hpp"

namespace teleguard::learn {

// Anything that can score (s, a) pairs and differentiate w.r.t. the action.
class ActionValueFunction {
 public:
  virtual ~ActionValueFunction() = default;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  // Returns Q per column; fills dQ/da (act_dim x B) when action_grad is set.
  virtual Eigen::RowVectorXd action_values(const Eigen::MatrixXd& obs,
                                           const Eigen::MatrixXd& actions,
                                           Eigen::MatrixXd* action_grad = nullptr) const = 0;
};

struct CriticConfig {
  double gamma = 0.98;
  double alpha = 5.0;
  double lambda_fail = 1.0;
  int horizon = 10;
  int target_period = 200;
  int num_ood_samples = 10;
  double learning_rate = 3e-4;
  int batch_size = 256;
  int training_steps = 20000;
  int hidden_units = 64;
  // Terminal rows back up r / (1 - gamma): the outcome label keeps being
  // broadcast after the episode ends. When false terminal rows back up plain r.
  bool absorbing_terminal = true;
  double low_percentile = 1.0;
  double high_percentile = 99.0;
  double threshold_percentile = 5.0;
  int log_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
  static CriticConfig from_config(const ConfigMap& map, const std::string& prefix = "critic.");
  void to_config(ConfigMap& map, const std::string& prefix = "critic.") const;
};

struct Calibration {
  bool calibrated = false;
  double q_min = 0.0;
  double q_max = 0.0;
  double threshold = 0.0;  // tau: feasible iff Q >= threshold

  bool operator==(const Calibration&) const = default;
};

struct Score {
  double q = 0.0;
  double q_normalized = 0.0;
  double p_fail = 0.5;
  bool feasible = false;
};

// Success score Q_phi on a shared tanh trunk with two linear heads (Q and the
// H-step failure logit), plus a target copy of trunk and Q head.
class CriticModel : public ActionValueFunction {
 public:
  CriticModel() = default;
  // Fan-in uniform init for the trunk and Q head; the failure head starts at
  // zero so an untrained model predicts p = 0.5 everywhere.
  static CriticModel create(int obs_dim, int act_dim, double command_max, FeatureScaler scaler,
                            int hidden_units, Rng& rng);

  int obs_dim() const override { return obs_dim_; }
  int act_dim() const override { return act_dim_; }
  double command_max() const { return command_max_; }

  Eigen::MatrixXd network_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const;

  Eigen::RowVectorXd q_values(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const;
  Eigen::RowVectorXd target_q_values(const Eigen::MatrixXd& obs,
                                     const Eigen::MatrixXd& actions) const;
  Eigen::RowVectorXd failure_logits(const Eigen::MatrixXd& obs,
                                    const Eigen::MatrixXd& actions) const;
  Eigen::RowVectorXd action_values(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions,
                                   Eigen::MatrixXd* action_grad = nullptr) const override;

  // clip((q - q_min) / (q_max - q_min), 0, 1). Throws std::logic_error if uncalibrated.
  double normalize(double q) const;
  Score score(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;

  void sync_target();
  // Q_min/Q_max at the given percentiles of Q over (obs, actions); threshold at
  // the percentile of Q over the success subset.
  void calibrate(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions,
                 std::span<const std::uint8_t> from_success, double low_pct, double high_pct,
                 double threshold_pct);
  void set_calibration(const Calibration& c);
  const Calibration& calibration() const { return calibration_; }

  // Live parameters in order trunk, Q head, failure head.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  const nn::Mlp& trunk() const { return trunk_; }
  const nn::Mlp& q_head() const { return q_head_; }
  const nn::Mlp& fail_head() const { return fail_head_; }
  nn::Mlp& mutable_q_head() { return q_head_; }
  nn::Mlp& mutable_fail_head() { return fail_head_; }
  const FeatureScaler& scaler() const { return scaler_; }

  int horizon = 10;
  double gamma = 0.98;
  double dt = 0.0;  // servo period of the training data; 0 if unknown

  std::string serialize() const;
  static CriticModel deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static CriticModel load(const std::filesystem::path& path);

  bool operator==(const CriticModel& other) const;

 private:
  friend struct CriticLossEvaluator;

  int obs_dim_ = 0;
  int act_dim_ = 0;
  double command_max_ = 1.0;
  FeatureScaler scaler_;
  nn::Mlp trunk_, q_head_, fail_head_;
  nn::Mlp target_trunk_, target_q_head_;
  Calibration calibration_;
};

double log_mean_exp(std::span<const double> values);

// Linear-interpolated percentile in [0, 100] (numpy "linear" rule).
double percentile(std::vector<double> values, double pct);

// y = r + gamma * Q_target(s', a'_data) on non-terminal rows; terminal rows get r
// (episodic) or r / (1 - gamma) (absorbing).
Eigen::VectorXd td_target(const data::TransitionBatch& batch, const CriticModel& model,
                          double gamma, bool absorbing_terminal);

// act_dim x (B*M) uniform samples in the command box; column m*B + i belongs to
// batch row i.
Eigen::MatrixXd sample_ood_actions(int act_dim, int batch_size, int num_samples,
                                   double command_max, Rng& rng);

struct CriticLossWeights {
  double alpha = 5.0;
  double lambda_fail = 1.0;
};

struct CriticLossTerms {
  double td = 0.0;       // 0.5 * mean (Q - y)^2
  double penalty = 0.0;  // mean over rows of logmeanexp_j Q(s, a_j) - Q(s, a_data)
  double bce = 0.0;      // mean BCE of the failure head
  double total = 0.0;    // td + alpha * penalty + lambda_fail * bce
};

// Full critic objective and its exact gradient w.r.t. CriticModel::parameters().
// The sampled set for the penalty is {a_data} plus the given OOD actions.
CriticLossTerms critic_loss(const CriticModel& model, const data::TransitionBatch& batch,
                            const Eigen::VectorXd& targets, const Eigen::MatrixXd& ood_actions,
                            const CriticLossWeights& weights, Eigen::VectorXd* gradient);

// Single-term views used by tests and diagnostics.
double cql_penalty(const CriticModel& model, const data::TransitionBatch& batch,
                   const Eigen::MatrixXd& ood_actions, Eigen::VectorXd* gradient = nullptr);
double failure_head_loss(const CriticModel& model, const data::TransitionBatch& batch,
                         Eigen::VectorXd* gradient = nullptr);

// Mean BCE between labels and sigmoid(logits), computed stably from logits.
double binary_cross_entropy_with_logits(const Eigen::VectorXd& logits,
                                        const Eigen::VectorXd& labels);

struct TrainingLogEntry {
  int step = 0;
  CriticLossTerms terms;
};

struct CriticTrainingResult {
  CriticModel model;
  std::vector<TrainingLogEntry> log;
  bool missing_failures = false;
};

// Seeded loop: sample batch -> TD + alpha * penalty + lambda_fail * BCE -> Adam;
// hard target copy every target_period steps; then calibration on every pair
// in the table. Throws DivergenceError on a non-finite loss.
CriticTrainingResult train_critic(const data::TransitionTable& table, const CriticConfig& config,
                                  double command_max);

}  // namespace teleguard::learn
