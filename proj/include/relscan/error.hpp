#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <string_view>

namespace relscan {

enum class ErrorKind {
    Validation,
    Parse,
    Io,
    Ingestion,
    Conflict,
    Integrity,
    NotFound,
    RateLimited,
    Usage,
    Unsupported,
    UndefinedCorrelation,
    NotEnoughReleases,
    RejectedNoReleases,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// True for failures a caller may retry later (I/O, rate limiting).
    bool retryable() const noexcept {
        return kind_ == ErrorKind::Io || kind_ == ErrorKind::RateLimited;
    }

private:
    ErrorKind kind_;
};

/// Raised when a remote service signals its quota is exhausted.
class RateLimitError : public Error {
public:
    RateLimitError(const std::string& message, std::chrono::sys_seconds reset_at)
        : Error(ErrorKind::RateLimited, message), reset_at_(reset_at) {}

    std::chrono::sys_seconds reset_at() const noexcept { return reset_at_; }

private:
    std::chrono::sys_seconds reset_at_;
};

} // namespace relscan
