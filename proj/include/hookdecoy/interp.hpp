#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

class Loader;

enum class Opcode : std::uint8_t {
  kJmpRel32,      // E9 rel32, displacement from the end of the instruction
  kJmpIndirect,   // FF 25 abs32, jumps through a pointer slot
  kPushImm32,     // 68 imm32
  kRet,           // C3
  kMovRegImm32,   // B8 imm32
  kJmpReg,        // FF E0
  kNop,           // 90
  kNativeGate,    // F4
  kDetourGate,    // F5 id32
};

const char* to_string(Opcode op);

struct Instruction {
  Opcode op = Opcode::kNop;
  std::uint32_t operand = 0;  // displacement, address or handler id

  bool operator==(const Instruction&) const = default;
};

std::uint32_t encoded_length(Opcode op);
Bytes encode(const Instruction& i);
void encode_into(const Instruction& i, Bytes& out);

struct Decoded {
  Instruction instruction;
  std::uint32_t length = 0;
};

/// Pure decode of one instruction at bytes[at]. Throws kUndecodable on an
/// unknown opcode or a truncated encoding.
Decoded decode(std::span<const Byte> bytes, std::size_t at);

inline constexpr std::uint32_t kDefaultStepBudget = 64;
/// Steps of an undetoured call: the 16-byte NOP sled plus the native gate.
inline constexpr std::uint32_t kNativeCallSteps = kPrologueLen + 1;

struct ExecContext {
  Address pc = 0;
  std::optional<Address> pushed;
  std::optional<Address> reg;
  ActorId caller = kSystemActor;
  std::uint32_t step_budget = kDefaultStepBudget;
  std::uint32_t steps = 0;
};

struct GateReached {
  enum class Kind { kNative, kDetour } kind = Kind::kNative;
  std::string module;        // native gate: owning module load name
  std::string export_name;   // native gate: owning export
  std::uint32_t handler_id = 0;
  Address gate_address = 0;
  std::uint32_t steps = 0;
};

/// Runs from entry until a gate opcode. Fetches go through the process with
/// execute access, so guard pages trip exactly as they would for data access.
GateReached execute_at(SimProcess& process, const Loader& loader, ExecContext& ctx, Address entry);

}  // namespace hookdecoy
