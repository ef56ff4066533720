#include "geoview/common/error.hpp"

namespace geoview {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::InvalidDepth: return "invalid depth";
    case ErrorKind::Bounds: return "bounds error";
    case ErrorKind::BehindCamera: return "point behind camera";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Invariant: return "invariant violation";
  }
  return "error";
}

}  // namespace geoview
