#pragma once

#include <stdexcept>
#include <string>

namespace tightham {

/// Error categories shared by every module. The CLI maps them onto exit codes.
enum class ErrorKind {
  kInvalidInput,      // bad arguments, malformed files, unsupported uniformity
  kStageFailure,      // an algorithmic step did not succeed
  kVerification,      // a produced structure failed self-verification
  kInternal,          // construction bug guard
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error invalid_input(std::string code, const std::string& what) {
  return Error(ErrorKind::kInvalidInput, std::move(code), what);
}

inline Error stage_failure(std::string code, const std::string& what) {
  return Error(ErrorKind::kStageFailure, std::move(code), what);
}

inline Error verification_failure(std::string code, const std::string& what) {
  return Error(ErrorKind::kVerification, std::move(code), what);
}

inline Error internal_error(std::string code, const std::string& what) {
  return Error(ErrorKind::kInternal, std::move(code), what);
}

}  // namespace tightham
