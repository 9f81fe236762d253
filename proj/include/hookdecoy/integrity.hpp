#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hookdecoy/hooklayer.hpp"
#include "hookdecoy/loader.hpp"
#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

enum class GuardMode : std::uint8_t { kOff, kRestoreOnly, kStrictTerminate };
enum class TamperKind : std::uint8_t { kPrologueMismatch, kGuardTrip, kCloneLoad };
enum class TamperAction : std::uint8_t { kRepatched, kRehooked, kTerminatedThread };

const char* to_string(GuardMode m);
const char* to_string(TamperKind k);
const char* to_string(TamperAction a);
std::optional<GuardMode> guard_mode_from_string(std::string_view s);

struct IntegrityConfig {
  bool watchdog = true;
  Tick watchdog_period = 10;
  GuardMode guard_mode = GuardMode::kOff;
  bool clone_rehook = true;
  /// Modules whose prologues the adversary may scan.
  std::vector<std::string> scan_scope = {"user32.sim"};

  void validate() const;
};

struct TamperEvent {
  Tick tick_detected = 0;
  Tick tick_restored = 0;
  TamperKind kind = TamperKind::kPrologueMismatch;
  std::string module;
  std::string export_name;  // empty for module-level events
  Address target = 0;
  Tick restore_latency = 0;
  TamperAction action = TamperAction::kRepatched;
  ActorId actor = kSystemActor;  // faulting actor for guard trips
};

/// Keeps installed hooks in place: periodic verification, clone re-hooking
/// on module load and guard-page tripwires.
class IntegrityManager {
 public:
  using TerminateFn = std::function<void(ActorId)>;

  IntegrityManager(SimProcess& process, Loader& loader, HookLayer& hooks, IntegrityConfig cfg,
                   bool obfuscate, Rng& trampoline_rng);

  /// Subscribes to loads, installs the fault handler, arms guards and
  /// schedules the watchdog starting one period from now.
  void activate();

  std::vector<TamperEvent> watchdog_check();
  std::vector<TamperEvent> on_module_load(const ModuleImage& m);
  FaultDisposition on_guard_fault(const Fault& f);
  /// Guards every hooked prologue page; returns the number of pages armed.
  std::size_t arm_guards();

  void set_terminate_callback(TerminateFn fn) { terminate_ = std::move(fn); }
  /// Receives faults the manager does not own.
  void set_default_fault_handler(FaultHandler fn) { fallback_ = std::move(fn); }

  const IntegrityConfig& config() const { return cfg_; }
  const std::vector<TamperEvent>& events() const { return events_; }

 private:
  bool guards_enabled() const { return cfg_.guard_mode != GuardMode::kOff; }
  void record(TamperEvent ev);
  Tick latency_for(const HookRecord& rec, Tick now) const;
  FaultDisposition forward(const Fault& f);

  SimProcess& process_;
  Loader& loader_;
  HookLayer& hooks_;
  IntegrityConfig cfg_;
  bool obfuscate_;
  Rng& rng_;
  TerminateFn terminate_;
  FaultHandler fallback_;
  std::vector<TamperEvent> events_;
  std::optional<TaskId> watchdog_task_;
};

}  // namespace hookdecoy
