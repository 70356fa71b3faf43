#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pcinf {

// Error kinds map directly onto CLI exit codes.
enum class ErrorKind { config = 2, computation = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string stage, std::string code, const std::string& message)
        : std::runtime_error(stage + ": [" + code + "] " + message),
          kind_(kind),
          stage_(std::move(stage)),
          code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& stage() const noexcept { return stage_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string stage_;
    std::string code_;
};

// Bad input files, bad configuration, missing tickers. Exit code 2.
class ConfigError : public Error {
public:
    ConfigError(std::string stage, std::string code, const std::string& message)
        : Error(ErrorKind::config, std::move(stage), std::move(code), message) {}
};

// Numerically degenerate or impossible computations. Exit code 3.
class ComputeError : public Error {
public:
    ComputeError(std::string stage, std::string code, const std::string& message)
        : Error(ErrorKind::computation, std::move(stage), std::move(code), message) {}
};

}  // namespace pcinf
