#pragma once

#include <stdexcept>
#include <string>

namespace stratus {

/// Base exception for every module. `code` is a stable machine-readable tag
/// (e.g. "payload_short", "unknown_variable") that callers and wire formats
/// carry verbatim; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace stratus
