#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wlkaf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes of operands do not conform.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A value became non-finite or a linear system could not be solved.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid user-supplied parameter (bandwidth, grid size, K, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// Backward pass called with a cache that no longer matches the parameters.
class StateError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the byte offset at which decoding failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Cache or model container is unreadable or has the wrong version.
class CacheError : public Error {
public:
    using Error::Error;
};

/// Expected dataset files are missing.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace wlkaf
