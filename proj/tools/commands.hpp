#pragma once

#include <string>
#include <vector>

#include <CLI11.hpp>

namespace ssvo::cli {

/// Registers every subcommand on `app`; the chosen one runs from its callback.
void register_commands(CLI::App& app);

/// Expands `--config FILE` into flags placed right after the subcommand.
/// Keys already given on the command line are left alone, so flags win.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args);

/// Set by gradcheck when a case misses its tolerance.
inline bool gradient_check_failed = false;

}  // namespace ssvo::cli
