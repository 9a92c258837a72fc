#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "esiii/config.hpp"

namespace esiii::cli {

// Per-invocation inputs that are not part of the run configuration.
struct CommandArgs {
  std::string image;    // infer, attack
  std::string text;     // infer, attack
  std::string setting;  // infer
  std::string output;   // infer, attack
};

const std::vector<std::string>& subcommands();

// Runs one subcommand. Domain errors propagate as esiii::Error.
void dispatch(const std::string& subcommand, const RunConfig& cfg, const CommandArgs& args, std::ostream& out,
              std::ostream& log);

// Full command line handling. Returns 0 on success, 1 on a domain error and
// 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace esiii::cli
