#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pedocds {

/// Broad failure classes; the HTTP layer maps them to 400/404/409.
enum class ErrorKind {
  validation,
  not_found,
  conflict,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what) : Error(ErrorKind::not_found, what) {}
};

class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& what) : Error(ErrorKind::conflict, what) {}
};

/// Syntax or semantic error in a text document, with a 1-based source position.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : ValidationError(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& message() const noexcept { return message_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string message_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace pedocds
