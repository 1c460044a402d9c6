#pragma once

#include <stdexcept>
#include <string>

namespace vaecf {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kNumeric = 3,
};

class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad command line, unknown or malformed configuration keys.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

/// Input data problems: unreadable files, parse failures, empty corpora, corrupt checkpoints.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what, ExitCode::kData) {}
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyCorpusError : public DataError {
public:
    explicit EmptyCorpusError(const std::string& what) : DataError(what) {}
};

class CorruptCheckpointError : public DataError {
public:
    explicit CorruptCheckpointError(const std::string& what) : DataError(what) {}
};

/// Mismatched matrix / layer dimensions. Always a programming or config error.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(what, ExitCode::kUsage) {}
};

/// Non-finite values in a loss, gradient or metric.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, ExitCode::kNumeric) {}
};

/// A ranking metric was requested for a user with no held-out items.
class UndefinedMetricError : public DataError {
public:
    explicit UndefinedMetricError(const std::string& what) : DataError(what) {}
};

}  // namespace vaecf
