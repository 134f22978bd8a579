#pragma once

#include <stdexcept>
#include <string>

namespace reglgc {

// Failure categories map 1:1 onto process exit codes and C API status codes.
enum class ErrorCode : int {
    ok = 0,
    validation = 1,
    numerical = 2,
    io = 3,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

class ValidationError : public Error {
  public:
    explicit ValidationError(const std::string& what) : Error(ErrorCode::validation, what) {}
};

class NumericalError : public Error {
  public:
    explicit NumericalError(const std::string& what) : Error(ErrorCode::numerical, what) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

}  // namespace reglgc
