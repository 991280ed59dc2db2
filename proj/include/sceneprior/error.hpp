#pragma once

#include <stdexcept>
#include <string>

namespace sceneprior {

// All library failures carry a short machine-readable code plus a human
// message. The CLI prints them as a single "error: <code>: <message>" line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace sceneprior
