#pragma once

#include <stdexcept>
#include <string>

namespace uqeval {

enum class ErrorKind {
    validation,
    io,
    dependency,
    transport,
    request,
    capability,
    integrity,
    data,
    domain,
};

// Pipeline errors carry a kind so the CLI can map them to exit codes
// (validation-class -> 2, dependency -> 3, transport -> 4).
class UqError : public std::runtime_error {
public:
    UqError(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
            case ErrorKind::dependency: return 3;
            case ErrorKind::transport:  return 4;
            default:                    return 2;
        }
    }

private:
    ErrorKind kind_;
};

} // namespace uqeval
