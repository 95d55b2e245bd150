#pragma once

#include <stdexcept>
#include <string>

namespace xlcode {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input file or container does not match its declared format.
class FormatError : public Error {
public:
    using Error::Error;
};

// A domain invariant or operation precondition was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Misconfiguration (missing interpreter, bad mode/lang combination, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Sandbox or OS-level failure; the affected outcome must not be recorded.
class InfrastructureError : public Error {
public:
    using Error::Error;
};

} // namespace xlcode
