#pragma once

namespace deleaker::cli {

// Parses argv and runs one subcommand. Exit codes: 0 success, 1 usage
// error, 2 data error.
int run(int argc, char** argv);

} // namespace deleaker::cli
