#pragma once

#include <iosfwd>

namespace freedrag {

/// Command-line entry point: run, suite, ablate and serve subcommands.
/// Returns the process exit code; diagnostics go to err.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace freedrag
