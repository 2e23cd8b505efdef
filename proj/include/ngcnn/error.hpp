#pragma once

#include <stdexcept>
#include <string>

namespace ngcnn {

// Base of every error raised by the library. The CLI maps each subclass to a
// distinct exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (files, corpora, lexicons).
class InputError : public Error {
public:
    using Error::Error;
};

// Precondition violated by a caller-supplied value.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Layer graph or document shapes that cannot be realized.
class ShapeError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, malformed };

    CheckpointError(Kind kind, const std::string& what)
      : Error(what), kind_(kind)
    { }

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace ngcnn
