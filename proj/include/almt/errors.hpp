#pragma once

#include <stdexcept>
#include <string>

namespace almt {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration or violated call contract.
struct ValidationError : Error {
    using Error::Error;
};

// Malformed file contents; messages carry a byte offset where known.
struct FormatError : Error {
    using Error::Error;
};

// Non-finite values or other numeric failures.
struct NumericError : Error {
    using Error::Error;
};

} // namespace almt
