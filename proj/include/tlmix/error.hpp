#pragma once

#include <stdexcept>
#include <string>

namespace tlmix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument: non-finite input, out-of-range parameter, bad invariant.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Mismatched vector/matrix dimensions between inputs.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A moment that requires every degree of freedom to exceed 2.
class InfiniteVarianceError : public DomainError {
public:
  using DomainError::DomainError;
};

/// Quadrature, root-finding or factorization failure.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace tlmix
