#pragma once

#include <spdlog/spdlog.h>

namespace teleguard {

// Reads TELEGUARD_LOG={error,info,debug}; defaults to info. Unknown values fall
// back to info with a warning.
void init_logging_from_env();

}  // namespace teleguard
