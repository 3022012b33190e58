#pragma once

#include <stdexcept>
#include <string>

namespace nlmc {

/// Bad user input: malformed config files, inconsistent grid sizes,
/// unreadable permeability files. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure: singular systems, Newton breakdown, CFL violations.
/// Maps to CLI exit code 3.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace nlmc
