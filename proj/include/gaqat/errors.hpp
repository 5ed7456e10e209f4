#pragma once

#include <stdexcept>
#include <string>

namespace gaqat {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    numeric = 3,
    contract = 4,
};

class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode exit_code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config error: " + what, ExitCode::config) {}
};

/// Malformed user-provided data (labels, datasets, logs, domain names).
class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error("input error: " + what, ExitCode::config) {}
};

/// Non-finite values encountered during computation.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric error: " + what, ExitCode::numeric) {}
};

/// API misuse: stale tapes, unknown ids, off-schedule calls.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error("contract error: " + what, ExitCode::contract) {}
};

/// Mismatched tensor dimensions.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape error: " + what, ExitCode::contract) {}
};

}  // namespace gaqat
