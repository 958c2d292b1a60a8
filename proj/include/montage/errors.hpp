#pragma once

#include <stdexcept>
#include <string>

namespace montage {

// Input/ingestion problems: bad files, dangling references, empty or
// disconnected systems. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string &msg) : std::runtime_error(msg) {}
};

// Numerical failures of a solve: singular or indefinite normal matrix,
// iterative breakdown treated as fatal. Maps to CLI exit code 3.
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace montage
