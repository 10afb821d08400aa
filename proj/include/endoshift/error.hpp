#pragma once

#include <stdexcept>
#include <string>

namespace endoshift {

/// Base class for every error raised by the library. Messages are meant to
/// be shown to the user as-is.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input failed validation (bad manifest line, bad config, missing file).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical solver could not produce a finite answer.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace endoshift
