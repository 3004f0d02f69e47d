#pragma once

namespace rlsta::cli {

// Parses argv and runs one subcommand. Returns the process exit code:
// 0 success, 2 validation, 3 backend, 4 partial completion.
int run(int argc, char** argv);

}  // namespace rlsta::cli
