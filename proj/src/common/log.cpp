#include "teleguard/common/log.hpp"

#include <cstdlib>
#include <string>

namespace teleguard {

void init_logging_from_env() {
  const char* env = std::getenv("TELEGUARD_LOG");
  const std::string level = env ? env : "info";
  spdlog::set_pattern("[%l] %v");
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("TELEGUARD_LOG='{}' not recognized, using info", level);
  }
}

}  // namespace teleguard
