#pragma once

#include <stdexcept>
#include <string>

namespace deepcabac {

// Root of every error the library raises. Callers that only need to report
// can catch this; the CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (bad argument combination).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Bad user data: non-finite weights, mismatched lengths, negative importance.
class InputError : public Error {
 public:
  using Error::Error;
};

// Value outside the representable range of a code.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Reading ran past the end of the available bytes.
class TruncatedStream : public Error {
 public:
  using Error::Error;
};

// Bytes decode to something no encoder could have produced.
class CorruptStream : public Error {
 public:
  using Error::Error;
};

// Container-level problems. The subclasses let callers distinguish them.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};

class BadVersion : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedRecord : public FormatError {
 public:
  TruncatedRecord(std::string tensor, const std::string& what)
      : FormatError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

// NPY / manifest / importance ingestion failures.
class IngestionError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepcabac
