#pragma once

namespace brsnis::cli {

/// Entry point for the `brsnis` executable. Returns 0 on success, 2 on a
/// configuration error and 3 on a runtime error.
int run_cli(int argc, char** argv);

}  // namespace brsnis::cli
