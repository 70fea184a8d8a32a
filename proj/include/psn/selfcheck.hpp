#pragma once

#include <iosfwd>

namespace psn {

// Runs adjoint, prox-oracle, gradient and beta-convergence checks.
// Prints one line per check; returns true iff all pass.
bool run_selfcheck(std::ostream& out);

}  // namespace psn
