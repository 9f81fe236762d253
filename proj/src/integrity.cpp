#include "hookdecoy/integrity.hpp"

#include <algorithm>
#include <set>

namespace hookdecoy {

namespace {

constexpr const char* kGuardModeNames[] = {"OFF", "RESTORE_ONLY", "STRICT_TERMINATE"};
constexpr const char* kTamperKindNames[] = {"PROLOGUE_MISMATCH", "GUARD_TRIP", "CLONE_LOAD"};
constexpr const char* kTamperActionNames[] = {"REPATCHED", "REHOOKED", "TERMINATED_THREAD"};

constexpr int kWatchdogPriority = 20;

bool prologue_matches(const Bytes& live, const HookRecord& rec) {
  if (prologue_hash(live) != rec.expected_hash) return false;
  return std::equal(live.begin(), live.end(), rec.expected_layout.begin(), rec.expected_layout.end());
}

}  // namespace

const char* to_string(GuardMode m) { return kGuardModeNames[static_cast<int>(m)]; }
const char* to_string(TamperKind k) { return kTamperKindNames[static_cast<int>(k)]; }
const char* to_string(TamperAction a) { return kTamperActionNames[static_cast<int>(a)]; }

std::optional<GuardMode> guard_mode_from_string(std::string_view s) {
  for (int i = 0; i < 3; ++i)
    if (s == kGuardModeNames[i]) return static_cast<GuardMode>(i);
  return std::nullopt;
}

void IntegrityConfig::validate() const {
  if (watchdog_period < 1) throw SimError(ErrorCode::kConfig, "watchdog_period must be >= 1");
}

IntegrityManager::IntegrityManager(SimProcess& process, Loader& loader, HookLayer& hooks,
                                   IntegrityConfig cfg, bool obfuscate, Rng& trampoline_rng)
    : process_(process),
      loader_(loader),
      hooks_(hooks),
      cfg_(std::move(cfg)),
      obfuscate_(obfuscate),
      rng_(trampoline_rng) {
  cfg_.validate();
}

void IntegrityManager::activate() {
  loader_.subscribe_load_events([this](const ModuleImage& m) { on_module_load(m); });
  process_.set_fault_handler([this](const Fault& f) { return on_guard_fault(f); });
  if (guards_enabled()) arm_guards();
  if (cfg_.watchdog) {
    const Tick first = process_.now() + cfg_.watchdog_period;
    watchdog_task_ = process_.clock().schedule([this](Tick) { watchdog_check(); }, first,
                                               kWatchdogPriority, cfg_.watchdog_period);
  }
}

void IntegrityManager::record(TamperEvent ev) {
  process_.emit({.actor = kDefenseActor,
                 .kind = EventKind::kTamper,
                 .addr = ev.target,
                 .len = static_cast<std::uint32_t>(ev.restore_latency),
                 .value = static_cast<std::int64_t>(ev.kind),
                 .aux = static_cast<std::int64_t>(ev.action),
                 .name = ev.export_name,
                 .text = ev.module,
                 .note = ev.kind == TamperKind::kGuardTrip
                             ? std::to_string(to_underlying(ev.actor))
                             : std::string{}});
  events_.push_back(std::move(ev));
}

Tick IntegrityManager::latency_for(const HookRecord& rec, Tick now) const {
  const auto& entries = process_.log().entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    const Event& e = *it;
    if (e.kind != EventKind::kWrite || e.actor == kDefenseActor ||
        e.value != static_cast<std::int64_t>(WriteOutcome::kLanded))
      continue;
    if (e.addr < rec.target + kPrologueLen && rec.target < e.addr + e.len) return now - e.tick;
  }
  return 0;
}

std::vector<TamperEvent> IntegrityManager::watchdog_check() {
  std::vector<TamperEvent> found;
  const Tick now = process_.now();
  for (auto& [key, rec] : hooks_.registry()) {
    const Bytes live = process_.peek(rec.target, kPrologueLen);
    if (prologue_matches(live, rec)) continue;
    TamperEvent ev;
    ev.tick_detected = now;
    ev.restore_latency = latency_for(rec, now);
    hooks_.repatch(rec);
    if (guards_enabled() && rec.guard_armed) process_.request_guard_rearm(rec.target);
    ev.tick_restored = now;
    ev.kind = TamperKind::kPrologueMismatch;
    ev.module = rec.module_name;
    ev.export_name = rec.export_name;
    ev.target = rec.target;
    ev.action = TamperAction::kRepatched;
    found.push_back(ev);
    record(std::move(ev));
  }
  return found;
}

std::vector<TamperEvent> IntegrityManager::on_module_load(const ModuleImage& m) {
  if (!cfg_.clone_rehook) return {};
  const std::uint64_t sig = loader_.export_signature(m);
  for (const ModuleImage& sys : loader_.modules()) {
    if (sys.origin != ModuleOrigin::kSystem || sys.base == m.base) continue;
    if (loader_.export_signature(sys) != sig) continue;
    const auto originals = hooks_.registry().for_module(sys.base);
    if (originals.empty()) return {};
    // Copy first: installing adds to the registry the pointers came from.
    std::vector<std::pair<std::string, std::uint32_t>> wanted;
    for (const HookRecord* r : originals) wanted.emplace_back(r->export_name, r->handler_id);
    for (const auto& [name, handler] : wanted) {
      if (hooks_.registry().find(m.base, name)) continue;
      hooks_.install_hook(m, name, handler, obfuscate_, rng_);
    }
    if (guards_enabled()) arm_guards();
    TamperEvent ev;
    ev.tick_detected = ev.tick_restored = process_.now();
    ev.kind = TamperKind::kCloneLoad;
    ev.module = m.name;
    ev.target = m.base;
    ev.action = TamperAction::kRehooked;
    record(ev);
    return {ev};
  }
  return {};
}

FaultDisposition IntegrityManager::forward(const Fault& f) {
  return fallback_ ? fallback_(f) : FaultDisposition::kRetry;
}

FaultDisposition IntegrityManager::on_guard_fault(const Fault& f) {
  if (f.kind != FaultKind::kGuardViolation) return forward(f);
  // The tripwire is one-shot; it goes back up once this access completes.
  process_.request_guard_rearm(f.address);
  if (f.actor == kDefenseActor || f.access == Access::kExecute) return FaultDisposition::kRetry;

  HookRecord* rec = hooks_.registry().find_covering(f.address);
  if (!rec || !is_adversary(f.actor)) return forward(f);

  const Bytes live = process_.peek(rec->target, kPrologueLen);
  if (!prologue_matches(live, *rec)) hooks_.repatch(*rec);
  // An attacker that made the code writable may never get to flip it back.
  if (process_.protection_at(rec->target) != Protection::kExecuteRead)
    process_.protect(kDefenseActor, rec->target, kPrologueLen, Protection::kExecuteRead);

  const bool strict = cfg_.guard_mode == GuardMode::kStrictTerminate;
  TamperEvent ev;
  ev.tick_detected = ev.tick_restored = process_.now();
  ev.kind = TamperKind::kGuardTrip;
  ev.module = rec->module_name;
  ev.export_name = rec->export_name;
  ev.target = rec->target;
  ev.action = strict ? TamperAction::kTerminatedThread : TamperAction::kRepatched;
  ev.actor = f.actor;
  record(std::move(ev));
  if (strict && terminate_) terminate_(f.actor);
  // Writes never land; scans see the live (detoured) bytes.
  return f.access == Access::kWrite ? FaultDisposition::kSuppress : FaultDisposition::kRetry;
}

std::size_t IntegrityManager::arm_guards() {
  std::set<Address> armed;
  std::set<Address> skipped;
  for (auto& [key, rec] : hooks_.registry()) {
    const Address page = page_base(rec.target);
    const ModuleImage* m = loader_.module_at(rec.target);
    if (m && !m->page_guardable(rec.target)) {
      if (skipped.insert(page).second)
        process_.emit({.actor = kDefenseActor,
                       .kind = EventKind::kScenarioWarning,
                       .addr = page,
                       .name = "unguardable_page",
                       .text = rec.module_name});
      continue;
    }
    if (!rec.guard_armed && !armed.contains(page) && process_.protection_at(page) != Protection::kGuard)
      process_.protect(kDefenseActor, page, kPageSize, Protection::kGuard);
    armed.insert(page);
    rec.guard_armed = true;
  }
  return armed.size();
}

}  // namespace hookdecoy
