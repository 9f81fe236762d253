#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hookdecoy/loader.hpp"
#include "hookdecoy/rng.hpp"
#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

using Prologue = std::array<Byte, kPrologueLen>;

enum class TrampolineKind : std::uint8_t { kClassicJmp, kPushRet, kMovJmpReg };

const char* to_string(TrampolineKind k);

struct TrampolineVariant {
  TrampolineKind kind = TrampolineKind::kClassicJmp;
  std::uint32_t pre_pad = 0;
  std::uint32_t post_pad = 0;

  bool operator==(const TrampolineVariant&) const = default;
};

/// Encoded length of the jump itself, without padding.
std::uint32_t trampoline_body_length(TrampolineKind k);

struct Trampoline {
  Prologue layout{};
  TrampolineVariant variant;
};

/// FNV-1a/64 of the 16 prologue bytes.
std::uint64_t prologue_hash(std::span<const Byte> bytes);

/// Deterministic layout for an explicit variant choice.
Trampoline build_trampoline(Address stub, Address entry, TrampolineKind kind,
                            std::uint32_t pre_pad);

/// Classic E9 when obfuscate is off; otherwise PUSH/RET or MOV/JMP reg with
/// 0-3 leading NOPs, both drawn from rng.
Trampoline generate_trampoline(Address stub, Address entry, bool obfuscate, Rng& rng);

struct HookRecord {
  Address target = 0;
  std::string export_name;
  std::string module_name;
  Address module_base = 0;
  Prologue original_prologue{};
  Prologue expected_layout{};
  std::uint64_t expected_hash = 0;
  Address stub = 0;
  std::uint32_t handler_id = 0;
  TrampolineVariant variant;
  bool guard_armed = false;
};

/// One executable page of 16-byte detour stubs. Slots are handed out
/// uniformly at random among the free ones.
class DetourArena {
 public:
  static constexpr std::uint32_t kSlotSize = 16;
  static constexpr std::uint32_t kSlots = kPageSize / kSlotSize;

  DetourArena(SimProcess& process, ActorId owner);

  /// Writes a DETOUR_GATE stub for handler_id and returns its address.
  Address allocate(std::uint32_t handler_id, Rng& rng);
  void release(Address stub);

  Address base() const { return base_; }
  bool contains(Address a) const { return a >= base_ && a - base_ < kPageSize; }
  std::size_t in_use() const { return used_count_; }

 private:
  SimProcess& process_;
  ActorId owner_;
  Address base_;
  std::array<bool, kSlots> used_{};
  std::size_t used_count_ = 0;
};

class DetourRegistry {
 public:
  void add(HookRecord rec);
  void erase(Address module_base, const std::string& export_name);

  HookRecord* find(Address module_base, std::string_view export_name);
  const HookRecord* find(Address module_base, std::string_view export_name) const;
  /// The record whose 16-byte prologue contains a.
  HookRecord* find_covering(Address a);
  const HookRecord* by_target(Address target) const;
  std::vector<const HookRecord*> by_name(std::string_view export_name) const;
  std::vector<const HookRecord*> for_module(Address module_base) const;

  std::size_t size() const { return records_.size(); }
  auto begin() { return records_.begin(); }
  auto end() { return records_.end(); }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

 private:
  std::map<std::pair<Address, std::string>, HookRecord, std::less<>> records_;
};

/// Installs, removes and re-applies inline detours. All patch writes are made
/// by the defense actor with a temporary READ_WRITE flip.
class HookLayer {
 public:
  explicit HookLayer(SimProcess& process, ActorId actor = kDefenseActor);

  const HookRecord& install_hook(const ModuleImage& m, const std::string& export_name,
                                 std::uint32_t handler_id, bool obfuscate, Rng& rng);
  /// Restores the original prologue. Throws kStaleRecord if rec is no longer
  /// installed.
  void remove_hook(const HookRecord& rec);
  /// Writes expected_layout back over the prologue.
  void repatch(const HookRecord& rec);

  Prologue read_prologue(Address target) const;

  DetourRegistry& registry() { return registry_; }
  const DetourRegistry& registry() const { return registry_; }
  DetourArena& arena() { return arena_; }

 private:
  void patch(Address target, std::span<const Byte> bytes);

  SimProcess& process_;
  ActorId actor_;
  DetourArena arena_;
  DetourRegistry registry_;
};

}  // namespace hookdecoy
