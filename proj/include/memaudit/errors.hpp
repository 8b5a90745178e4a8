#pragma once

#include <stdexcept>
#include <string>

namespace memaudit {

/// Base class for all library errors.
class AuditError : public std::runtime_error {
public:
    explicit AuditError(const std::string& what) : std::runtime_error(what) {}
};

class InvalidCorpus : public AuditError {
public:
    using AuditError::AuditError;
};

class InsertionFailure : public AuditError {
public:
    using AuditError::AuditError;
};

class InvalidToken : public AuditError {
public:
    using AuditError::AuditError;
};

class NumericalError : public AuditError {
public:
    using AuditError::AuditError;
};

class FormatError : public AuditError {
public:
    using AuditError::AuditError;
};

class SpaceTooLarge : public AuditError {
public:
    using AuditError::AuditError;
};

class FitError : public AuditError {
public:
    using AuditError::AuditError;
};

class ConfigError : public AuditError {
public:
    using AuditError::AuditError;
};

class IoError : public AuditError {
public:
    using AuditError::AuditError;
};

} // namespace memaudit
