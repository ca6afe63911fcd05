#include "teleguard/eval/bundle.hpp"

#include "teleguard/common/errors.hpp"

namespace teleguard::eval {

ModelBundle load_bundle(const std::filesystem::path& critic_path,
                        const std::filesystem::path& actor_path) {
  ModelBundle b;
  if (!critic_path.empty()) {
    if (!std::filesystem::exists(critic_path)) {
      throw ValidationError("critic checkpoint not found: " + critic_path.string());
    }
    b.critic = learn::CriticModel::load(critic_path);
  }
  if (!actor_path.empty()) {
    if (!std::filesystem::exists(actor_path)) {
      throw ValidationError("actor checkpoint not found: " + actor_path.string());
    }
    b.actor = learn::ActorModel::load(actor_path);
  }
  if (b.critic && b.actor &&
      (b.critic->obs_dim() != b.actor->obs_dim() || b.critic->act_dim() != b.actor->act_dim())) {
    throw ValidationError("critic and actor checkpoints have different dimensions");
  }
  return b;
}

}  // namespace teleguard::eval
