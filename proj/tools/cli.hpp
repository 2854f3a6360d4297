#pragma once

namespace stargraph {

/// Full command-line entry point (separated from main for testability).
/// Returns 0 on success, 2 on usage errors, 1 on runtime failures.
int cli_main(int argc, const char* const* argv);

}  // namespace stargraph
