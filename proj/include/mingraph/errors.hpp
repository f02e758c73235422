#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mingraph {

// All contract violations surface as Error with a stable machine-readable
// code ("TooCoarse", "ProjectionFailure", ...) plus a human message.  Tests
// and the CLI dispatch on the code, never on the message text.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace mingraph
