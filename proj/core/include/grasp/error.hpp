#pragma once

#include <stdexcept>
#include <string>

namespace grasp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed something that violates an operation's precondition.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A file or payload did not match the expected on-disk or wire format.
class FormatError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

/// Failure talking to a completion or embedding backend.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int attempts, bool retriable)
      : Error(what), attempts_(attempts), retriable_(retriable) {}

  int attempts() const noexcept { return attempts_; }
  bool retriable() const noexcept { return retriable_; }

 private:
  int attempts_;
  bool retriable_;
};

}  // namespace grasp
