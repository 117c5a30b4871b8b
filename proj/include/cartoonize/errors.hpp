#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctz {

// Categories surfaced to callers and mapped to CLI diagnostics.
enum class ErrorKind {
  argument,
  shape,
  decode,
  data,
  io,
  parse,
  validation,
  configuration,
  resource,
  numeric,
  integrity,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

}  // namespace ctz
