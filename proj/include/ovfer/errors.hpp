#pragma once

#include <stdexcept>
#include <string>

namespace ovfer {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map exception type -> exit code (validation = 1, runtime/divergence = 2).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input files / referenced paths are missing or unreadable.
class IngestionError : public Error {
public:
    using Error::Error;
};

// A file parsed, but its content violates the declared schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

// An argument is outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// A request violates the evaluation protocol (split sizes, class counts...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// A call violates an API precondition (shape mismatch, empty input...).
class ContractError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

// Checkpoint / config / dataset disagree with each other.
class CompatibilityError : public Error {
public:
    using Error::Error;
};

class PlotError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss; message names the component.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace ovfer
