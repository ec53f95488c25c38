#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace regime {

/// Broad failure class, used by the CLI to pick an exit status.
enum class ErrorKind {
    Usage = 1,
    Data = 2,
    Numerical = 3,
};

/// Exception carrying the originating module and a stable error code.
///
/// what() renders as `<module>:<code>: <message>`, which is the body of the
/// CLI's `ERROR` line.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, std::string code, const std::string& message)
        : std::runtime_error(module + ":" + code + ": " + message),
          kind_(kind),
          module_(std::move(module)),
          code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string module_;
    std::string code_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, std::string_view module, std::string_view code,
                              const std::string& message) {
    throw Error(kind, std::string(module), std::string(code), message);
}

}  // namespace detail
}  // namespace regime
