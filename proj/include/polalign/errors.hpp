#pragma once

#include <stdexcept>
#include <string>

namespace polalign {

/// Caller supplied a value outside an operation's domain.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Counts do not carry enough information for the requested estimate.
class InsufficientData : public std::runtime_error {
 public:
  explicit InsufficientData(const std::string& what, std::string basis = {})
      : std::runtime_error(what), basis_(std::move(basis)) {}

  /// Name of the offending basis ("Z", "X", "Y"), row or column, if known.
  const std::string& where() const noexcept { return basis_; }

 private:
  std::string basis_;
};

/// Fit could not be performed (degenerate design, too few cells).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A structured input file violates its schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace polalign
