#pragma once

#include <stdexcept>
#include <string>

namespace epinet {

// All recoverable failures carry a module + short code so the CLI can emit
// machine-parsable "ERROR:<module>:<code>: <message>" lines.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string code, const std::string& message)
      : std::runtime_error("ERROR:" + module + ":" + code + ": " + message),
        module_(std::move(module)),
        code_(std::move(code)) {}

  const std::string& module() const { return module_; }
  const std::string& code() const { return code_; }

 private:
  std::string module_;
  std::string code_;
};

}  // namespace epinet
