#pragma once

namespace endoshift {

/// Entry point of the `endoshift` tool. Returns the process exit code:
/// 0 success, 2 validation failure, 3 partial results, 1 other errors.
int run_cli(int argc, char** argv);

} // namespace endoshift
