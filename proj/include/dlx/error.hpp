#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dlx {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a precondition (length mismatch, k < 1, bad span).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Mathematically undefined input, e.g. cosine of a zero vector.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Base for anything wrong with input data: missing files, bad records.
class DataError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlx
