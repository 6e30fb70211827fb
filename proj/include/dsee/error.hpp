#pragma once

#include <stdexcept>
#include <string>

namespace dsee {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument, malformed config or file.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A model violates its invariants (probabilities, reward bounds, discount).
class ModelError : public Error {
public:
    using Error::Error;
};

/// Chain is reducible or periodic, so it has no unique positive limit.
class ErgodicityError : public ModelError {
public:
    using ModelError::ModelError;
};

/// An iterative procedure hit its iteration or step cap.
class NonTerminationError : public Error {
public:
    using Error::Error;
};

/// Query on a state-action pair that was never recorded.
class UnvisitedPairError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ConfigError(message);
}

} // namespace dsee
