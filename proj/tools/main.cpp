#include <algorithm>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "commands.hpp"
#include "ssvo/errors.hpp"
#include "ssvo/log.hpp"

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kNumerical = 4 };

int fail(const char* kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n') c = ' ';
  }
  fmt::print(stderr, "error={} {}\n", kind, flat);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised monocular depth and ego-motion: data generation, training and evaluation", "ssvo"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  ssvo::cli::register_commands(app);
  try {
    ssvo::configure_logging_from_env();
    std::vector<std::string> args = ssvo::cli::expand_config(app, std::vector<std::string>(argv + 1, argv + argc));
    // CLI11 consumes a vector back to front.
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const ssvo::ConfigError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const ssvo::ShapeError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const ssvo::IoError& e) {
    return fail("io", e.what(), kIo);
  } catch (const ssvo::NumericalError& e) {
    return fail("numerical", e.what(), kNumerical);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
  return ssvo::cli::gradient_check_failed ? kNumerical : kOk;
}
