#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace instab {

// Raised for malformed or invariant-violating input data (CLI exit code 1).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what,
                     std::optional<std::size_t> line = std::nullopt,
                     std::string trace_id = {})
      : std::runtime_error(what), line_(line), trace_id_(std::move(trace_id)) {}

  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& trace_id() const noexcept { return trace_id_; }

 private:
  std::optional<std::size_t> line_;
  std::string trace_id_;
};

// Raised for invalid configuration or arguments (CLI exit code 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace instab
