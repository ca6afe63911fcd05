#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "teleguard/common/config_map.hpp"
#include "teleguard/common/random.hpp"
#include "teleguard/data/sampler.hpp"
#include "teleguard/learn/critic.hpp"
#include "teleguard/learn/feature_scaler.hpp"
#include "teleguard/nn/mlp.hpp"

namespace teleguard::learn {

struct ActorConfig {
  double lambda_anchor = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 256;
  int training_steps = 5000;
  int hidden_units = 64;
  int log_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
  static ActorConfig from_config(const ConfigMap& map, const std::string& prefix = "actor.");
  void to_config(ConfigMap& map, const std::string& prefix = "actor.") const;
};

// Deterministic policy a = command_max * tanh(f_theta(scaled s)).
class ActorModel {
 public:
  ActorModel() = default;
  static ActorModel create(int obs_dim, int act_dim, double command_max, FeatureScaler scaler,
                           int hidden_units, Rng& rng);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  double command_max() const { return command_max_; }

  // Columns are states.
  Eigen::MatrixXd act(const Eigen::MatrixXd& obs, nn::ForwardCache* cache = nullptr) const;
  Eigen::VectorXd act_one(const Eigen::VectorXd& obs) const;

  // d<grad_action, act(obs)>/d theta for a cache populated by act().
  Eigen::VectorXd parameter_gradient(const nn::ForwardCache& cache,
                                     const Eigen::MatrixXd& grad_action) const;

  Eigen::VectorXd parameters() const { return net_.parameters(); }
  void set_parameters(const Eigen::VectorXd& flat) { net_.set_parameters(flat); }
  const nn::Mlp& network() const { return net_; }
  nn::Mlp& mutable_network() { return net_; }
  const FeatureScaler& scaler() const { return scaler_; }

  double dt = 0.0;

  std::string serialize() const;
  static ActorModel deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static ActorModel load(const std::filesystem::path& path);
  bool operator==(const ActorModel& other) const { return serialize() == other.serialize(); }

 private:
  int obs_dim_ = 0;
  int act_dim_ = 0;
  double command_max_ = 1.0;
  FeatureScaler scaler_;
  nn::Mlp net_;  // final layer tanh
};

struct ActorLossTerms {
  double value = 0.0;   // mean -Q(s, pi(s))
  double anchor = 0.0;  // mean ||pi(s) - a_tele||^2
  double total = 0.0;   // value + lambda_anchor * anchor
};

// Objective and exact gradient w.r.t. ActorModel::parameters(). The critic is
// only read; its action gradient carries the value term into theta.
ActorLossTerms actor_loss(const ActorModel& actor, const ActionValueFunction& critic,
                          const Eigen::MatrixXd& obs, const Eigen::MatrixXd& tele_actions,
                          double lambda_anchor, Eigen::VectorXd* gradient);

struct ActorLogEntry {
  int step = 0;
  ActorLossTerms terms;
};

struct ActorTrainingResult {
  ActorModel model;
  std::vector<ActorLogEntry> log;
};

// Throws DivergenceError on a non-finite loss.
ActorTrainingResult train_actor(const data::TransitionTable& table,
                                const ActionValueFunction& critic, const ActorConfig& config,
                                double command_max);

Eigen::VectorXd assist_action(const ActorModel& actor, const Eigen::VectorXd& obs);

}  // namespace teleguard::learn
