#pragma once

#include <stdexcept>
#include <string>

namespace capire {

/// Root of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed user input: bad parameters, schema violations, unknown ids.
/// `where` carries a field path or location when one is known.
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& what, std::string where = {})
        : Error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

class UnknownCourse : public InvalidInput {
public:
    explicit UnknownCourse(const std::string& id) : InvalidInput("unknown course '" + id + "'") {}
};

/// Requested data outside the covered range of a series.
class InsufficientHistory : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

/// Internal invariant broken. Indicates a bug, never bad data.
class ContractViolation : public Error {
public:
    using Error::Error;
};

}  // namespace capire
