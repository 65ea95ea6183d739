#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrs {

enum class ErrorCode {
  schema,
  parse,
  empty_data,
  domain,
  separation,
  collinearity,
  convergence,
  trimming,
  config,
  staleness,
  insufficient_draws,
  degenerate_test,
  spec,
  internal,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised while reading a data file; `row` is the 1-based data row (header excluded).
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& what)
      : Error(ErrorCode::parse, "row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class CollinearityError : public Error {
 public:
  CollinearityError(std::vector<std::string> columns, const std::string& what)
      : Error(ErrorCode::collinearity, what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(std::vector<double> last_iterate, const std::string& what)
      : Error(ErrorCode::convergence, what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

}  // namespace qrs
