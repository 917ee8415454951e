#pragma once

#include <stdexcept>
#include <string>

namespace mapnet {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidInputError : public Error {
public:
    explicit InvalidInputError(const std::string& msg) : Error(msg) {}
};

// Thrown by the LU solver for singular or ill-conditioned systems.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& msg, double pivot)
        : Error(msg + " (pivot magnitude " + std::to_string(pivot) + ")"),
          pivot_magnitude(pivot) {}
    double pivot_magnitude;
};

// A graph row with zero degree cannot be symmetrically normalized.
class IsolatedNodeError : public Error {
public:
    IsolatedNodeError(const std::string& msg, int row)
        : Error(msg + " (row " + std::to_string(row) + ")"), row_index(row) {}
    int row_index;
};

class NumericInstabilityError : public Error {
public:
    explicit NumericInstabilityError(const std::string& msg) : Error(msg) {}
};

class IncompleteRelationMapError : public Error {
public:
    explicit IncompleteRelationMapError(const std::string& msg) : Error(msg) {}
};

class InsufficientPairsError : public Error {
public:
    explicit InsufficientPairsError(const std::string& msg) : Error(msg) {}
};

class InvalidEpisodeError : public Error {
public:
    explicit InvalidEpisodeError(const std::string& msg) : Error(msg) {}
};

// Configuration problems: unknown keys, type mismatches, values out of range.
class InvalidConfigError : public Error {
public:
    explicit InvalidConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed dataset/report files; message carries path and line.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

class TrainingDivergedError : public Error {
public:
    TrainingDivergedError(const std::string& msg, std::string param)
        : Error(msg + " (parameter " + param + ")"), parameter(std::move(param)) {}
    std::string parameter;
};

} // namespace mapnet
