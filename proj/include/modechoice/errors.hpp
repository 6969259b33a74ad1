#pragma once

#include <stdexcept>
#include <string>

namespace modechoice {

// Base for every error the library raises deliberately.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Schema or configuration document is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A tabular input row could not be turned into a ChoiceInstance.
class LoadError : public Error {
public:
    LoadError(std::size_t row, std::string column, const std::string& what)
        : Error("row " + std::to_string(row) + ", column '" + column + "': " + what)
        , row_(row)
        , column_(std::move(column))
    {
    }

    [[nodiscard]] std::size_t row() const noexcept { return row_; }
    [[nodiscard]] const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

// Not enough respondents, rows or pool members for the requested sizes.
class SizingError : public Error {
public:
    using Error::Error;
};

// Caller broke a function precondition (length mismatch, bad count, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class InvalidChoiceError : public Error {
public:
    using Error::Error;
};

// Endpoint call failed after the retry budget. status() is 0 for transport failures.
class GatewayError : public Error {
public:
    GatewayError(const std::string& what, int status, int attempts)
        : Error(what + " (status " + std::to_string(status) + ", attempts " + std::to_string(attempts) + ")")
        , status_(status)
        , attempts_(attempts)
    {
    }

    [[nodiscard]] int status() const noexcept { return status_; }
    [[nodiscard]] int attempts() const noexcept { return attempts_; }

private:
    int status_;
    int attempts_;
};

class PersistenceError : public Error {
public:
    using Error::Error;
};

class DuplicateRecordError : public PersistenceError {
public:
    using PersistenceError::PersistenceError;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

class DesignError : public Error {
public:
    using Error::Error;
};

class LeakageError : public Error {
public:
    using Error::Error;
};

} // namespace modechoice
