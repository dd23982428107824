#pragma once

#include <stdexcept>
#include <string>

namespace sift {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Manifest/CSV schema problems. Carries the 1-based data row when known (0 otherwise).
class ManifestError : public Error {
public:
    ManifestError(const std::string& message, std::size_t row = 0)
        : Error(row ? "row " + std::to_string(row) + ": " + message : message), row_(row) {}

    [[nodiscard]] std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sift
