#include "bscloth/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>

namespace bscloth {

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("bscloth");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("BSCLOTH_LOG")) {
      l->set_level(spdlog::level::from_str(env));
    }
    return l;
  }();
  return instance;
}

}  // namespace bscloth
