#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mmmc {

/// Base of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state outside the model's domain, or a step that cannot be completed.
/// Carries the offending path index when the failure is path-local.
class StepError : public Error {
public:
    explicit StepError(const std::string& what, std::optional<std::size_t> path = std::nullopt)
        : Error(path ? what + " (path " + std::to_string(*path) + ")" : what), path_(path) {}

    [[nodiscard]] std::optional<std::size_t> path() const noexcept { return path_; }

private:
    std::optional<std::size_t> path_;
};

/// Precondition violated by the caller (bad sizes, out-of-range parameters).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace mmmc
