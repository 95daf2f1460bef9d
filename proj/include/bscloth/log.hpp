#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace bscloth {

/// Library logger. Level comes from the BSCLOTH_LOG environment variable
/// (trace, debug, info, warn, error, off); default is warn.
std::shared_ptr<spdlog::logger> logger();

}  // namespace bscloth
