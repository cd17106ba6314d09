#pragma once

#include <stdexcept>
#include <string>

namespace mmm {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes disagree with an operation's requirements.
struct DimensionError : Error {
    using Error::Error;
};

// An id/index is outside its valid range.
struct IndexError : Error {
    using Error::Error;
};

// Caller violated an API precondition.
struct ContractError : Error {
    using Error::Error;
};

// A softmax row with every position masked out.
struct DegenerateRowError : Error {
    using Error::Error;
};

// A binary file does not match its documented layout.
struct FormatError : Error {
    using Error::Error;
};

// Filesystem-level failure (open/read/write).
struct IoError : Error {
    using Error::Error;
};

// Data fails schema or value-range validation.
struct ValidationError : Error {
    using Error::Error;
};

// A text or JSONL payload could not be parsed.
struct ParseError : Error {
    using Error::Error;
};

// A without-replacement pool ran out of items.
struct CapacityError : Error {
    using Error::Error;
};

} // namespace mmm
