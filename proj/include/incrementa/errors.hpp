#pragma once

#include <stdexcept>
#include <string>

namespace incrementa {

// Exit-code families used by the CLI: 2 config, 3 data, 4 numeric/solver.
enum class ErrorKind { config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string category, const std::string& message)
      : std::runtime_error(category + ": " + message),
        kind_(kind),
        category_(std::move(category)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& category() const { return category_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
  std::string category_;
};

[[noreturn]] inline void throw_config(const std::string& category, const std::string& msg) {
  throw Error(ErrorKind::config, category, msg);
}
[[noreturn]] inline void throw_data(const std::string& category, const std::string& msg) {
  throw Error(ErrorKind::data, category, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& category, const std::string& msg) {
  throw Error(ErrorKind::numeric, category, msg);
}

}  // namespace incrementa
