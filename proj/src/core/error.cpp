#include "demark/core/error.hpp"

namespace demark {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateTrace: return "degenerate trace";
    case ErrorKind::MalformedTrace: return "malformed trace";
    case ErrorKind::Causality: return "causality";
    case ErrorKind::Format: return "format";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::State: return "state";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::InsufficientLength: return "insufficient length";
    case ErrorKind::OutOfRange: return "out of range";
    case ErrorKind::LengthMismatch: return "length mismatch";
    case ErrorKind::DegenerateInput: return "degenerate input";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace demark
