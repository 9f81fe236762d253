#include "hookdecoy/hooklayer.hpp"

#include <algorithm>

#include "hookdecoy/fnv.hpp"
#include "hookdecoy/interp.hpp"

namespace hookdecoy {

const char* to_string(TrampolineKind k) {
  switch (k) {
    case TrampolineKind::kClassicJmp: return "CLASSIC_JMP";
    case TrampolineKind::kPushRet: return "PUSH_RET";
    case TrampolineKind::kMovJmpReg: return "MOV_JMP_REG";
  }
  return "?";
}

std::uint32_t trampoline_body_length(TrampolineKind k) {
  switch (k) {
    case TrampolineKind::kClassicJmp: return 5;
    case TrampolineKind::kPushRet: return 6;
    case TrampolineKind::kMovJmpReg: return 7;
  }
  return 0;
}

std::uint64_t prologue_hash(std::span<const Byte> bytes) { return fnv1a64(bytes); }

Trampoline build_trampoline(Address stub, Address entry, TrampolineKind kind,
                            std::uint32_t pre_pad) {
  const std::uint32_t body = trampoline_body_length(kind);
  if (pre_pad + body > kPrologueLen)
    throw SimError(ErrorCode::kBadArgument, "trampoline does not fit the prologue");
  Bytes out(pre_pad, 0x90);
  switch (kind) {
    case TrampolineKind::kClassicJmp:
      // Displacement is taken from the end of the jump, which sits after the pad.
      encode_into({Opcode::kJmpRel32, stub - (entry + pre_pad + 5)}, out);
      break;
    case TrampolineKind::kPushRet:
      encode_into({Opcode::kPushImm32, stub}, out);
      encode_into({Opcode::kRet, 0}, out);
      break;
    case TrampolineKind::kMovJmpReg:
      encode_into({Opcode::kMovRegImm32, stub}, out);
      encode_into({Opcode::kJmpReg, 0}, out);
      break;
  }
  out.resize(kPrologueLen, 0x90);
  Trampoline t;
  std::copy(out.begin(), out.end(), t.layout.begin());
  t.variant = {kind, pre_pad, kPrologueLen - pre_pad - body};
  return t;
}

Trampoline generate_trampoline(Address stub, Address entry, bool obfuscate, Rng& rng) {
  if (!obfuscate) return build_trampoline(stub, entry, TrampolineKind::kClassicJmp, 0);
  const auto kind = rng.below(2) == 0 ? TrampolineKind::kPushRet : TrampolineKind::kMovJmpReg;
  const auto pre_pad = static_cast<std::uint32_t>(rng.below(4));
  return build_trampoline(stub, entry, kind, pre_pad);
}

// ---------------------------------------------------------------------------

DetourArena::DetourArena(SimProcess& process, ActorId owner)
    : process_(process), owner_(owner),
      base_(process.alloc_region(kPageSize, Protection::kExecuteRead, owner)) {}

Address DetourArena::allocate(std::uint32_t handler_id, Rng& rng) {
  if (used_count_ == kSlots) throw SimError(ErrorCode::kBadArgument, "detour arena exhausted");
  std::uint64_t pick = rng.below(kSlots - used_count_);
  std::uint32_t slot = 0;
  for (;; ++slot) {
    if (used_[slot]) continue;
    if (pick-- == 0) break;
  }
  used_[slot] = true;
  ++used_count_;
  const Address stub = base_ + slot * kSlotSize;
  Bytes code = encode({Opcode::kDetourGate, handler_id});
  code.resize(kSlotSize, 0x90);
  process_.protect(owner_, stub, kSlotSize, Protection::kReadWrite);
  process_.write_bytes(owner_, stub, code);
  process_.protect(owner_, stub, kSlotSize, Protection::kExecuteRead);
  return stub;
}

void DetourArena::release(Address stub) {
  if (!contains(stub) || (stub - base_) % kSlotSize != 0) return;
  const std::uint32_t slot = (stub - base_) / kSlotSize;
  if (used_[slot]) {
    used_[slot] = false;
    --used_count_;
  }
}

// ---------------------------------------------------------------------------

void DetourRegistry::add(HookRecord rec) {
  auto key = std::make_pair(rec.module_base, rec.export_name);
  records_.emplace(std::move(key), std::move(rec));
}

void DetourRegistry::erase(Address module_base, const std::string& export_name) {
  records_.erase({module_base, export_name});
}

HookRecord* DetourRegistry::find(Address module_base, std::string_view export_name) {
  auto it = records_.find(std::make_pair(module_base, std::string(export_name)));
  return it == records_.end() ? nullptr : &it->second;
}

const HookRecord* DetourRegistry::find(Address module_base, std::string_view export_name) const {
  auto it = records_.find(std::make_pair(module_base, std::string(export_name)));
  return it == records_.end() ? nullptr : &it->second;
}

HookRecord* DetourRegistry::find_covering(Address a) {
  for (auto& [key, rec] : records_)
    if (a >= rec.target && a - rec.target < kPrologueLen) return &rec;
  return nullptr;
}

const HookRecord* DetourRegistry::by_target(Address target) const {
  for (const auto& [key, rec] : records_)
    if (rec.target == target) return &rec;
  return nullptr;
}

std::vector<const HookRecord*> DetourRegistry::by_name(std::string_view export_name) const {
  std::vector<const HookRecord*> out;
  for (const auto& [key, rec] : records_)
    if (rec.export_name == export_name) out.push_back(&rec);
  return out;
}

std::vector<const HookRecord*> DetourRegistry::for_module(Address module_base) const {
  std::vector<const HookRecord*> out;
  for (const auto& [key, rec] : records_)
    if (rec.module_base == module_base) out.push_back(&rec);
  return out;
}

// ---------------------------------------------------------------------------

HookLayer::HookLayer(SimProcess& process, ActorId actor)
    : process_(process), actor_(actor), arena_(process, actor) {}

Prologue HookLayer::read_prologue(Address target) const {
  const Bytes b = process_.peek(target, kPrologueLen);
  Prologue p{};
  std::copy(b.begin(), b.end(), p.begin());
  return p;
}

void HookLayer::patch(Address target, std::span<const Byte> bytes) {
  const auto old = process_.protect(actor_, target, kPrologueLen, Protection::kReadWrite);
  process_.write_bytes(actor_, target, bytes);
  // An armed guard survives the flip, so restore the base protection only.
  const Protection restore = old.front() == Protection::kGuard ? Protection::kExecuteRead : old.front();
  process_.protect(actor_, target, kPrologueLen, restore);
}

const HookRecord& HookLayer::install_hook(const ModuleImage& m, const std::string& export_name,
                                          std::uint32_t handler_id, bool obfuscate, Rng& rng) {
  const ExportEntry* e = m.find_export(export_name);
  if (!e) throw SimError(ErrorCode::kExportMissing, export_name + " in " + m.name);
  if (registry_.find(m.base, export_name))
    throw SimError(ErrorCode::kAlreadyHooked, export_name + " in " + m.name);

  HookRecord rec;
  rec.target = m.base + e->offset;
  rec.export_name = export_name;
  rec.module_name = m.name;
  rec.module_base = m.base;
  rec.handler_id = handler_id;
  rec.original_prologue = read_prologue(rec.target);
  rec.stub = arena_.allocate(handler_id, rng);
  const Trampoline t = generate_trampoline(rec.stub, rec.target, obfuscate, rng);
  rec.expected_layout = t.layout;
  rec.expected_hash = prologue_hash(t.layout);
  rec.variant = t.variant;
  patch(rec.target, t.layout);

  process_.emit({.actor = actor_,
                 .kind = EventKind::kHookInstall,
                 .addr = rec.target,
                 .len = kPrologueLen,
                 .value = handler_id,
                 .aux = static_cast<std::int64_t>(t.variant.kind) * 16 + t.variant.pre_pad,
                 .name = export_name,
                 .text = m.name});
  const Address base = rec.module_base;
  registry_.add(std::move(rec));
  return *registry_.find(base, export_name);
}

void HookLayer::remove_hook(const HookRecord& rec) {
  const HookRecord* live = registry_.find(rec.module_base, rec.export_name);
  if (!live || live->target != rec.target || live->stub != rec.stub)
    throw SimError(ErrorCode::kStaleRecord, rec.export_name + " in " + rec.module_name);
  const HookRecord copy = *live;
  patch(copy.target, copy.original_prologue);
  arena_.release(copy.stub);
  registry_.erase(copy.module_base, copy.export_name);
  process_.emit({.actor = actor_,
                 .kind = EventKind::kHookRemove,
                 .addr = copy.target,
                 .len = kPrologueLen,
                 .value = copy.handler_id,
                 .name = copy.export_name,
                 .text = copy.module_name});
}

void HookLayer::repatch(const HookRecord& rec) { patch(rec.target, rec.expected_layout); }

}  // namespace hookdecoy
