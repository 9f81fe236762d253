#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hookdecoy {

using Address = std::uint32_t;
using Tick = std::uint64_t;
using Byte = std::uint8_t;
using Bytes = std::vector<Byte>;

/// Identity of whoever touches simulated state. Adversary threads get ids
/// starting at kFirstAdversaryActor.
enum class ActorId : std::uint32_t {};

inline constexpr ActorId kSystemActor{0};
inline constexpr ActorId kDefenseActor{1};
inline constexpr ActorId kAppActor{2};
inline constexpr std::uint32_t kFirstAdversaryActor = 16;

constexpr std::uint32_t to_underlying(ActorId a) { return static_cast<std::uint32_t>(a); }
constexpr bool is_adversary(ActorId a) { return to_underlying(a) >= kFirstAdversaryActor; }

enum class ErrorCode {
  kBadArgument,
  kBadAddress,
  kUnknownTemplate,
  kNotExported,
  kAlreadyHooked,
  kExportMissing,
  kStaleRecord,
  kStepBudgetExceeded,
  kUndecodable,
  kNotExecutable,
  kUnknownApi,
  kUnhandledFault,
  kConfig,
  kIo,
};

const char* to_string(ErrorCode code);

/// Every recoverable domain error in the library is reported as a SimError.
class SimError : public std::runtime_error {
 public:
  SimError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr std::uint32_t kPageSize = 4096;
inline constexpr std::uint32_t kPrologueLen = 16;

constexpr Address page_base(Address a) { return a & ~(kPageSize - 1); }

}  // namespace hookdecoy
