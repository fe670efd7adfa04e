#pragma once

#include <stdexcept>
#include <string>

namespace ricl {

/// Base for every runtime failure raised by the library. Precondition
/// violations on arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file (dataset, split, embeddings).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-success HTTP exchange. `status` is 0 for transport failures.
class HttpError : public Error {
 public:
  HttpError(const std::string& what, int status, bool retryable)
      : Error(what), status_(status), retryable_(retryable) {}

  int status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

/// The language model produced nothing usable for one example (empty or
/// unmappable generation). Recorded per example; runs continue.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// No demonstration fits in the prompt budget for a query.
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, std::string query_id)
      : Error(what), query_id_(std::move(query_id)) {}

  const std::string& query_id() const noexcept { return query_id_; }

 private:
  std::string query_id_;
};

}  // namespace ricl
