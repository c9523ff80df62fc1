#pragma once

#include <stdexcept>
#include <string>

namespace sicl {

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation does not hold (bad pairing, empty set, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The input is outside the domain of the operation, e.g. normalizing a zero vector.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sicl
