/*
 * (C) Copyright 2026 the cntm authors
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace cntm {

// Error categories map onto process exit codes: usage/config -> 1,
// data/shape/domain -> 2, numeric -> 3.
enum class ErrorKind {
  kUsage,
  kConfig,
  kShape,
  kDomain,
  kData,
  kNumeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::kUsage:
      case ErrorKind::kConfig:
        return 1;
      case ErrorKind::kNumeric:
        return 3;
      default:
        return 2;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) {
  throw Error(ErrorKind::kUsage, msg);
}
[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::kConfig, msg);
}
[[noreturn]] inline void throw_shape(const std::string& msg) {
  throw Error(ErrorKind::kShape, msg);
}
[[noreturn]] inline void throw_domain(const std::string& msg) {
  throw Error(ErrorKind::kDomain, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::kData, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::kNumeric, msg);
}

#define CNTM_CHECK(cond, kind, msg)            \
  do {                                         \
    if (!(cond)) throw ::cntm::Error(kind, msg); \
  } while (0)

}  // namespace cntm
