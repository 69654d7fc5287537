#pragma once

#include <stdexcept>
#include <string>

namespace lms {

// Error categories map 1:1 onto CLI exit codes (and C API status values).
enum class ErrorKind {
  Usage = 1,         // bad flags, bad config keys, invalid dimensions
  Data = 2,          // unreadable/malformed files, parse failures
  Verification = 3,  // a numeric check failed (gradcheck, checksum)
  Internal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void throw_verify(const std::string& msg) { throw Error(ErrorKind::Verification, msg); }
[[noreturn]] inline void throw_internal(const std::string& msg) { throw Error(ErrorKind::Internal, msg); }

}  // namespace lms
