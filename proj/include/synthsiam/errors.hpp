#pragma once

#include <stdexcept>
#include <string>

namespace synthsiam {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition / argument violations. The CLI maps these to exit code 1,
// every other Error to exit code 2.
struct InvalidArgument : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct GenerationError : Error {
    using Error::Error;
};

} // namespace synthsiam
