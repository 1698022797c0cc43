#include "ssvo/log.hpp"

#include <cstdlib>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "ssvo/errors.hpp"

namespace ssvo {

void set_log_level(const std::string& level) {
  spdlog::level::level_enum value;
  if (level == "error") {
    value = spdlog::level::err;
  } else if (level == "info") {
    value = spdlog::level::info;
  } else if (level == "debug") {
    value = spdlog::level::debug;
  } else {
    throw ConfigError(fmt::format("SSVO_LOG_LEVEL must be error, info or debug, not '{}'", level));
  }
  static const bool installed = [] {
    auto logger = spdlog::stderr_logger_st("ssvo");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)installed;
  spdlog::set_level(value);
}

void configure_logging_from_env() {
  const char* env = std::getenv("SSVO_LOG_LEVEL");
  set_log_level(env && *env ? env : "info");
}

}  // namespace ssvo
