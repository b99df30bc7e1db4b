#pragma once

#include <stdexcept>
#include <string>

namespace noisyor {

enum class ErrorKind {
  InvalidArgument,      // malformed model, experiment or option
  UndefinedConditional, // conditioning event has probability zero
  InconsistentData,     // data contradicts the model class (e.g. ancestor cycle)
  Numerical,            // solver or normalization failure
  Io,                   // unreadable or malformed file
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string& what,
                    ErrorKind kind = ErrorKind::InvalidArgument) {
  if (!cond) throw Error(kind, what);
}

}  // namespace noisyor
