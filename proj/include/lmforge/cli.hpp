#pragma once

#include <iosfwd>

namespace lmforge {

// Entry point behind the lmforge binary; exposed so tests can drive the CLI
// in-process. Exit codes: 0 success, 2 configuration error, 1 runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lmforge
