#pragma once

#include <stdexcept>
#include <string>

namespace distil {

// Base of every error the pipeline raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Bad argument to an operation (negative loss, score outside [0,1], ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Cross-file inconsistency: unknown post ids, duplicates, corrupt stage output.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// A stage needs an artifact that has not been produced yet.
class MissingPrerequisite : public Error {
public:
    explicit MissingPrerequisite(std::string artifact)
        : Error("missing prerequisite artifact: " + artifact), artifact_(std::move(artifact)) {}
    const std::string& artifact() const { return artifact_; }

private:
    std::string artifact_;
};

}  // namespace distil
