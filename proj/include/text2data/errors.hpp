#pragma once

#include <stdexcept>
#include <string>

namespace text2data {

/// Bad argument or shape passed to a public operation.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf showed up where a finite value was required.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Text that does not follow the prompt grammar.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Generator asked for a feature combination it cannot produce.
class FeasibilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or malformed dataset / checkpoint file.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace text2data
