#pragma once

#include <stdexcept>
#include <string>

namespace fiemf {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A token or line in an input file could not be parsed.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A file has the wrong overall structure (empty, missing column, bad header).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Parsed data violates a dataset invariant (gaps, duplicates, bad dimensions).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// A function argument is outside its documented domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Training diverged. Carries the epoch and the last finite objective value.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch, double last_finite_loss)
        : Error(what), epoch_(epoch), last_finite_loss_(last_finite_loss) {}

    int epoch() const { return epoch_; }
    double last_finite_loss() const { return last_finite_loss_; }

private:
    int epoch_;
    double last_finite_loss_;
};

} // namespace fiemf
