#include "qrs/error.hpp"

namespace qrs {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return "schema";
    case ErrorCode::parse: return "parse";
    case ErrorCode::empty_data: return "empty-data";
    case ErrorCode::domain: return "domain";
    case ErrorCode::separation: return "separation";
    case ErrorCode::collinearity: return "collinearity";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::trimming: return "trimming";
    case ErrorCode::config: return "config";
    case ErrorCode::staleness: return "staleness";
    case ErrorCode::insufficient_draws: return "insufficient-draws";
    case ErrorCode::degenerate_test: return "degenerate-test";
    case ErrorCode::spec: return "spec";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

}  // namespace qrs
