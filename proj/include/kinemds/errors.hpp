#ifndef KINEMDS_ERRORS_HPP
#define KINEMDS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace kinemds {

/// Invalid dimensions, parameters or configuration.
class ConfigError : public std::invalid_argument {
public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Base for numerical failures (exit code 3 in the CLI).
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class RankDeficiencyError : public NumericalError {
public:
  explicit RankDeficiencyError(const std::string& msg) : NumericalError(msg) {}
};

class IdentifiabilityError : public NumericalError {
public:
  explicit IdentifiabilityError(const std::string& msg) : NumericalError(msg) {}
};

class DegenerateGeometryError : public NumericalError {
public:
  explicit DegenerateGeometryError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace kinemds

#endif
