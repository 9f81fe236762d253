#include "hookdecoy/types.hpp"

namespace hookdecoy {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadArgument: return "bad argument";
    case ErrorCode::kBadAddress: return "bad address";
    case ErrorCode::kUnknownTemplate: return "unknown template";
    case ErrorCode::kNotExported: return "not exported";
    case ErrorCode::kAlreadyHooked: return "already hooked";
    case ErrorCode::kExportMissing: return "export missing";
    case ErrorCode::kStaleRecord: return "stale record";
    case ErrorCode::kStepBudgetExceeded: return "step budget exceeded";
    case ErrorCode::kUndecodable: return "undecodable opcode";
    case ErrorCode::kNotExecutable: return "not executable";
    case ErrorCode::kUnknownApi: return "unknown api";
    case ErrorCode::kUnhandledFault: return "unhandled fault";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "io error";
  }
  return "error";
}

}  // namespace hookdecoy
