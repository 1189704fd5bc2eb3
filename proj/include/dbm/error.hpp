#pragma once

#include <stdexcept>
#include <string>

namespace dbm {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Manifest or result file does not parse under its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Parsed data violates a data-model invariant (duplicate ids, unknown labels, ...).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class BalanceError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an interface contract (shape mismatch, wrong stream count, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Dempster's rule is undefined because the two bodies of evidence fully conflict.
class TotalConflictError : public Error {
 public:
  using Error::Error;
};

/// Frames were pushed out of timestamp order.
class SequencingError : public Error {
 public:
  using Error::Error;
};

class InferenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbm
