#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "teleguard/assist/controller.hpp"
#include "teleguard/common/config_map.hpp"
#include "teleguard/eval/closed_loop.hpp"
#include "teleguard/sim/operator.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::eval {

struct ExperimentSpec {
  sim::WorldConfig world;
  sim::OperatorConfig op;
  assist::AssistConfig assist;
  assist::AssistMode mode = assist::AssistMode::kOff;
  int episodes = 50;
  std::uint64_t seed = 0;  // episode i uses seed + i
  double epsilon = -1.0;   // invasiveness bound; negative means 0.1 * command_max
  int workers = 0;         // 0: hardware concurrency
  int trace_episodes = 3;
  int bootstrap_resamples = 1000;

  double resolved_epsilon() const;
  std::uint64_t episode_seed(int index) const { return seed + static_cast<std::uint64_t>(index); }
  void validate() const;

  // Reads the "eval." keys plus the world/operator/assist sections.
  static ExperimentSpec from_config(const ConfigMap& map);
  void to_config(ConfigMap& map) const;
};

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

struct Aggregates {
  int episodes = 0;
  int successes = 0;
  int failures = 0;
  Interval success_rate;
  Interval completion_time;  // successes only; zeros when there are none
  Interval mean_deviation;
  Interval mean_g;
  double transparent_fraction = 0.0;  // pooled over all ticks
  double max_abs_torque = 0.0;
  bool within_epsilon = true;  // mean deviation <= epsilon
  bool operator==(const Aggregates&) const = default;
};

struct ExperimentReport {
  std::string mode;
  std::string operator_kind;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  double dt = 0.02;
  std::vector<EpisodeSummary> episodes;
  Aggregates aggregates;
  std::vector<EpisodeTrace> traces;  // first trace_episodes episodes
};

// Rejects dimension, command bound, or timing mismatches between the experiment and the
// supplied models, and missing models for learned modes.
void validate_models(const ExperimentSpec& spec, Models models);

// Percentile bootstrap (2.5, 97.5) of the mean.
Interval bootstrap_mean(std::span<const double> values, int resamples, std::uint64_t seed);

Aggregates compute_aggregates(std::span<const EpisodeSummary> episodes, double epsilon,
                              int resamples, std::uint64_t seed);

ExperimentReport run_experiment(const ExperimentSpec& spec, Models models);

}  // namespace teleguard::eval
