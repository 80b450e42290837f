#pragma once

#include <ostream>

namespace upix {

// Entry point behind the upix executable. Returns 0 on success, 1 on usage or
// validated-input errors and 2 on internal errors; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace upix
