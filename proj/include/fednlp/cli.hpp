#pragma once

namespace fednlp {

// Entry point behind the `fednlp` binary. Exit codes: 0 success, 1
// runtime failure (diagnostic on stderr), 2 usage error.
int cli_main(int argc, const char* const* argv);

}  // namespace fednlp
