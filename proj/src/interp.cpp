#include "hookdecoy/interp.hpp"

#include <cstdio>

#include "hookdecoy/loader.hpp"

namespace hookdecoy {

namespace {

std::uint32_t read_le32(std::span<const Byte> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void write_le32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<Byte>(v >> (8 * i)));
}

// Length of the instruction starting with this byte, 0 if unknown. FF needs
// the second byte to tell which form it is.
std::uint32_t length_from_lead(Byte lead) {
  switch (lead) {
    case 0xE9: case 0x68: case 0xB8: case 0xF5: return 5;
    case 0xFF: return 2;  // at least; FF 25 is 6
    case 0xC3: case 0x90: case 0xF4: return 1;
    default: return 0;
  }
}

}  // namespace

const char* to_string(Opcode op) {
  switch (op) {
    case Opcode::kJmpRel32: return "JMP_REL32";
    case Opcode::kJmpIndirect: return "JMP_INDIRECT";
    case Opcode::kPushImm32: return "PUSH_IMM32";
    case Opcode::kRet: return "RET";
    case Opcode::kMovRegImm32: return "MOV_REG_IMM32";
    case Opcode::kJmpReg: return "JMP_REG";
    case Opcode::kNop: return "NOP";
    case Opcode::kNativeGate: return "NATIVE_GATE";
    case Opcode::kDetourGate: return "DETOUR_GATE";
  }
  return "?";
}

std::uint32_t encoded_length(Opcode op) {
  switch (op) {
    case Opcode::kJmpRel32: case Opcode::kPushImm32: case Opcode::kMovRegImm32:
    case Opcode::kDetourGate:
      return 5;
    case Opcode::kJmpIndirect: return 6;
    case Opcode::kJmpReg: return 2;
    case Opcode::kRet: case Opcode::kNop: case Opcode::kNativeGate: return 1;
  }
  return 0;
}

void encode_into(const Instruction& i, Bytes& out) {
  switch (i.op) {
    case Opcode::kJmpRel32: out.push_back(0xE9); write_le32(out, i.operand); break;
    case Opcode::kJmpIndirect: out.push_back(0xFF); out.push_back(0x25); write_le32(out, i.operand); break;
    case Opcode::kPushImm32: out.push_back(0x68); write_le32(out, i.operand); break;
    case Opcode::kRet: out.push_back(0xC3); break;
    case Opcode::kMovRegImm32: out.push_back(0xB8); write_le32(out, i.operand); break;
    case Opcode::kJmpReg: out.push_back(0xFF); out.push_back(0xE0); break;
    case Opcode::kNop: out.push_back(0x90); break;
    case Opcode::kNativeGate: out.push_back(0xF4); break;
    case Opcode::kDetourGate: out.push_back(0xF5); write_le32(out, i.operand); break;
  }
}

Bytes encode(const Instruction& i) {
  Bytes out;
  encode_into(i, out);
  return out;
}

Decoded decode(std::span<const Byte> bytes, std::size_t at) {
  if (at >= bytes.size()) throw SimError(ErrorCode::kUndecodable, "decode past end of buffer");
  const auto need = [&](std::size_t n) {
    if (at + n > bytes.size()) throw SimError(ErrorCode::kUndecodable, "truncated instruction");
  };
  switch (bytes[at]) {
    case 0xE9: need(5); return {{Opcode::kJmpRel32, read_le32(bytes, at + 1)}, 5};
    case 0x68: need(5); return {{Opcode::kPushImm32, read_le32(bytes, at + 1)}, 5};
    case 0xB8: need(5); return {{Opcode::kMovRegImm32, read_le32(bytes, at + 1)}, 5};
    case 0xF5: need(5); return {{Opcode::kDetourGate, read_le32(bytes, at + 1)}, 5};
    case 0xC3: return {{Opcode::kRet, 0}, 1};
    case 0x90: return {{Opcode::kNop, 0}, 1};
    case 0xF4: return {{Opcode::kNativeGate, 0}, 1};
    case 0xFF:
      need(2);
      if (bytes[at + 1] == 0xE0) return {{Opcode::kJmpReg, 0}, 2};
      if (bytes[at + 1] == 0x25) {
        need(6);
        return {{Opcode::kJmpIndirect, read_le32(bytes, at + 2)}, 6};
      }
      break;
    default:
      break;
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "opcode 0x%02x at offset %zu", bytes[at], at);
  throw SimError(ErrorCode::kUndecodable, buf);
}

namespace {

Bytes fetch_or_throw(SimProcess& process, ActorId caller, Address a, std::uint32_t len) {
  ReadResult r = process.fetch(caller, a, len);
  if (!r.ok()) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "fetch at 0x%08x", a);
    throw SimError(ErrorCode::kNotExecutable, buf);
  }
  return std::move(r.bytes);
}

}  // namespace

GateReached execute_at(SimProcess& process, const Loader& loader, ExecContext& ctx, Address entry) {
  SimProcess::AccessScope scope(process);
  ctx.pc = entry;
  ctx.steps = 0;
  while (true) {
    if (ctx.steps >= ctx.step_budget) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "entry 0x%08x after %u steps", entry, ctx.steps);
      throw SimError(ErrorCode::kStepBudgetExceeded, buf);
    }
    Bytes code = fetch_or_throw(process, ctx.caller, ctx.pc, 1);
    std::uint32_t len = length_from_lead(code[0]);
    if (len == 0) decode(code, 0);  // throws with the offending byte
    if (code[0] == 0xFF) {
      code = fetch_or_throw(process, ctx.caller, ctx.pc, 2);
      if (code[1] == 0x25) len = 6;
    }
    if (len > 1) code = fetch_or_throw(process, ctx.caller, ctx.pc, len);
    const Decoded d = decode(code, 0);
    ++ctx.steps;
    const Address next = ctx.pc + d.length;
    const std::uint32_t operand = d.instruction.operand;
    switch (d.instruction.op) {
      case Opcode::kNop:
        ctx.pc = next;
        break;
      case Opcode::kJmpRel32:
        ctx.pc = next + operand;  // wraps like a signed 32-bit displacement
        break;
      case Opcode::kJmpIndirect: {
        ReadResult slot = process.read_bytes(ctx.caller, operand, 4);
        if (!slot.ok()) throw SimError(ErrorCode::kBadAddress, "indirect jump slot unreadable");
        ctx.pc = read_le32(slot.bytes, 0);
        break;
      }
      case Opcode::kPushImm32:
        ctx.pushed = operand;
        ctx.pc = next;
        break;
      case Opcode::kRet:
        if (!ctx.pushed) throw SimError(ErrorCode::kUndecodable, "RET with empty stack");
        ctx.pc = *ctx.pushed;
        ctx.pushed.reset();
        break;
      case Opcode::kMovRegImm32:
        ctx.reg = operand;
        ctx.pc = next;
        break;
      case Opcode::kJmpReg:
        if (!ctx.reg) throw SimError(ErrorCode::kUndecodable, "JMP reg with empty register");
        ctx.pc = *ctx.reg;
        break;
      case Opcode::kNativeGate: {
        GateReached g;
        g.kind = GateReached::Kind::kNative;
        g.gate_address = ctx.pc;
        g.steps = ctx.steps;
        const ModuleImage* m = loader.module_at(ctx.pc);
        const ExportEntry* e = m ? loader.export_at(*m, ctx.pc) : nullptr;
        if (!e) throw SimError(ErrorCode::kUndecodable, "native gate outside any export");
        g.module = m->name;
        g.export_name = e->name;
        return g;
      }
      case Opcode::kDetourGate: {
        GateReached g;
        g.kind = GateReached::Kind::kDetour;
        g.handler_id = operand;
        g.gate_address = ctx.pc;
        g.steps = ctx.steps;
        return g;
      }
    }
  }
}

}  // namespace hookdecoy
