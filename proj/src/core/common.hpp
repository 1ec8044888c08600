#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace metalora {

// Error categories mirrored one-to-one by the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  ShapeMismatch = 2,
  Io = 3,
  Config = 4,
  VerifyFailed = 5,
  Diverged = 6,
  Internal = 7,
  Interrupted = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(ErrorCode::ShapeMismatch, msg) {}
};
struct ArgError : Error {
  explicit ArgError(const std::string& msg) : Error(ErrorCode::InvalidArgument, msg) {}
};
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorCode::Io, msg) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorCode::Config, msg) {}
};
struct DivergedError : Error {
  explicit DivergedError(const std::string& msg) : Error(ErrorCode::Diverged, msg) {}
};
struct InterruptedError : Error {
  explicit InterruptedError(const std::string& msg) : Error(ErrorCode::Interrupted, msg) {}
};

// strf("conv kernel ", k, " too large") -> std::string
template <typename... Args>
std::string strf(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace metalora
