#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcwqd {

/// Input that violates a documented precondition or schema.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class FitFailure {
    NonConvergence,
    IllConditioned,
    InsufficientSpan,
    InsufficientCounts,
    Unidentifiable,
    Unreachable,
    QuadratureFailure,
};

std::string_view to_string(FitFailure kind);

/// A fitter or solver that could not produce a trustworthy result.
class FitError : public std::runtime_error {
public:
    FitError(FitFailure kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    FitFailure kind() const noexcept { return kind_; }

private:
    FitFailure kind_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pcwqd
