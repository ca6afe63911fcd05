#pragma once

#include <filesystem>
#include <optional>

#include "teleguard/eval/closed_loop.hpp"
#include "teleguard/learn/actor.hpp"
#include "teleguard/learn/critic.hpp"

namespace teleguard::eval {

// Owns whichever checkpoints were supplied.
struct ModelBundle {
  std::optional<learn::CriticModel> critic;
  std::optional<learn::ActorModel> actor;

  Models view() const {
    return {critic ? &*critic : nullptr, actor ? &*actor : nullptr};
  }
};

// Empty paths are skipped; a given path that does not exist is a ValidationError.
ModelBundle load_bundle(const std::filesystem::path& critic_path,
                        const std::filesystem::path& actor_path);

}  // namespace teleguard::eval
