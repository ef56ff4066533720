#pragma once

#include <stdexcept>
#include <string>

namespace geoview {

enum class ErrorKind {
  Config,
  Io,
  Contract,
  Dimension,
  InvalidDepth,
  Bounds,
  BehindCamera,
  Numeric,
  Invariant,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace geoview
