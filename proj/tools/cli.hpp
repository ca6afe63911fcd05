#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "teleguard/assist/controller.hpp"
#include "teleguard/common/config_map.hpp"
#include "teleguard/eval/experiment.hpp"
#include "teleguard/learn/actor.hpp"
#include "teleguard/learn/critic.hpp"
#include "teleguard/service/session.hpp"
#include "teleguard/sim/operator.hpp"
#include "teleguard/sim/world.hpp"

namespace teleguard::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2 };

struct CommonOptions {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

struct DataConfig {
  int episodes = 100;  // per operator kind
  std::vector<sim::OperatorKind> operators = {sim::OperatorKind::kExpert, sim::OperatorKind::kNoisy,
                                              sim::OperatorKind::kBiased};
  std::uint64_t seed = 0;
};

// Every section of the shared config file, parsed and cross-checked. Keys no
// section recognizes are rejected; "manifest." keys are ignored so a manifest
// can be fed back as --config.
struct ResolvedConfig {
  ConfigMap map;
  DataConfig data;
  sim::WorldConfig world;
  sim::OperatorConfig op;
  learn::CriticConfig critic;
  learn::ActorConfig actor;
  assist::AssistConfig assist;
  eval::ExperimentSpec eval;
  service::SessionConfig service;

  // Canonical text of every resolved value (defaults included).
  std::string canonical_text() const;
};

ResolvedConfig resolve_config(const ConfigMap& map);
// Loads --config, applies --set overrides in order.
ConfigMap load_config(const CommonOptions& options);

int gen_data(const CommonOptions& options, std::optional<int> episodes);
int train_critic(const CommonOptions& options, const std::string& dataset);
int train_actor(const CommonOptions& options, const std::string& dataset, const std::string& critic);
int evaluate(const CommonOptions& options, const std::string& critic, const std::string& actor,
             const std::vector<std::string>& modes, std::optional<int> episodes);
int inspect(const std::string& path);
int merge(const std::string& out, const std::vector<std::string>& inputs);
int serve(const CommonOptions& options, const std::string& critic, const std::string& actor,
          std::optional<int> port, const std::string& host, bool lockstep);

// Parses argv and dispatches; maps exceptions to exit codes.
int run(int argc, const char* const* argv);

}  // namespace teleguard::cli
