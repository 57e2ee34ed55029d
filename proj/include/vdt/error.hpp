#pragma once

#include <stdexcept>
#include <string>

namespace vdt {

/// Base error for all library failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape / dimension contract violations (divisibility, size mismatches).
struct DimError : Error {
    using Error::Error;
};

/// Bad or inconsistent experiment configuration. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

/// Missing / malformed data on disk, infeasible sampling geometry. CLI exit code 3.
struct DataError : Error {
    using Error::Error;
};

/// Numeric divergence or non-convergence. CLI exit code 4.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace vdt
