#pragma once

#include <stdexcept>
#include <string>

namespace retina {

// Base class for all library errors. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// File could not be read/written or has a malformed on-disk format.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// Arguments violate an operation's preconditions (shape mismatch, bad range).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

} // namespace retina
