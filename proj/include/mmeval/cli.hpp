#pragma once

namespace mmeval {

// Entry point for the mmeval binary. Exit codes: 0 success, 1 domain error,
// 2 usage error.
int run_cli(int argc, char** argv);

}  // namespace mmeval
