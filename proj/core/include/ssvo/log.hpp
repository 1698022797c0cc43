#pragma once

#include <string>

namespace ssvo {

/// Sets the global log level from SSVO_LOG_LEVEL (error, info or debug;
/// default info). Throws ConfigError on any other value.
void configure_logging_from_env();

/// error | info | debug
void set_log_level(const std::string& level);

}  // namespace ssvo
