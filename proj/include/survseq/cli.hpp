#pragma once

#include <iosfwd>

namespace survseq {

/// Entry point of the command-line tool. Returns the process exit code:
/// 0 on success, 2 on usage errors, 1 (or 3 for a diverged training run)
/// otherwise, with a single "error: <kind>: <message>" line on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace survseq
