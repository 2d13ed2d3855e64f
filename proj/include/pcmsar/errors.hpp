#pragma once

#include <stdexcept>
#include <string>

namespace pcmsar {

// Common base so callers can catch every library error in one clause.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File missing / unreadable / unwritable.
struct IoError : Error {
    using Error::Error;
};

// Malformed file contents; the message names the offending field.
struct FormatError : Error {
    using Error::Error;
};

// Argument outside its documented range.
struct ParamError : Error {
    using Error::Error;
};

// Rectangle or index outside the host image.
struct BoundsError : Error {
    using Error::Error;
};

// Input too small or empty for the operation to be meaningful.
struct DegenerateInput : Error {
    using Error::Error;
};

// Non-finite value encountered during training; message names the term.
struct NumericalError : Error {
    using Error::Error;
};

// Bad command-line invocation.
struct UsageError : Error {
    using Error::Error;
};

}  // namespace pcmsar
