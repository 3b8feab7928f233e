#pragma once

#include <iosfwd>

namespace momprop::cli {

// Exit status: 0 success (also when a fit did not converge), 2 usage,
// 3 input/output, 4 numeric failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace momprop::cli
