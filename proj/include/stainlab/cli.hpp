#pragma once

#include <string>
#include <vector>

namespace stainlab::cli {

/// Parses and runs one stainlab subcommand. args[0] is the program name.
/// Returns 0 on success; CLI usage errors return CLI11's code, library errors their category code.
int dispatch(const std::vector<std::string>& args);

/// Applies STAINLAB_LOG (trace|debug|info|warn|error|off) to the global logger.
void configure_logging_from_env();

}  // namespace stainlab::cli
