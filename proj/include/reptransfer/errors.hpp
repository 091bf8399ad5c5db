#pragma once

#include <stdexcept>
#include <string>

namespace reptransfer {

struct UnknownObservation : std::runtime_error {
    explicit UnknownObservation(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

struct LikelihoodDegenerate : std::runtime_error {
    explicit LikelihoodDegenerate(const std::string& what) : std::runtime_error(what) {}
};

struct MismatchedTasks : std::runtime_error {
    explicit MismatchedTasks(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct PlanningSupportEmpty : std::runtime_error {
    explicit PlanningSupportEmpty(const std::string& what) : std::runtime_error(what) {}
};

struct AccessRevoked : std::runtime_error {
    explicit AccessRevoked(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace reptransfer
