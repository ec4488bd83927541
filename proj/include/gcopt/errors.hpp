#pragma once

#include <stdexcept>
#include <string>

namespace gcopt {

/// Shape or dimension mismatch between operands.
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid parameter or argument value.
struct param_error : std::invalid_argument {
  explicit param_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Configuration file or run-config contract violation.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// An exact solver refused an instance above its size budget.
struct budget_error : std::runtime_error {
  explicit budget_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gcopt
