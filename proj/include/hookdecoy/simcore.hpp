#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "hookdecoy/types.hpp"

namespace hookdecoy {

enum class Protection : std::uint8_t { kReadWrite, kExecuteRead, kReadOnly, kNoAccess, kGuard };
enum class Access : std::uint8_t { kRead, kWrite, kExecute };
enum class FaultKind : std::uint8_t { kGuardViolation, kNoAccessViolation, kBadAddress };

const char* to_string(Protection p);
const char* to_string(Access a);
const char* to_string(FaultKind k);

struct Fault {
  FaultKind kind;
  Address address;
  Access access;
  ActorId actor;

  bool operator==(const Fault&) const = default;
};

/// What the registered handler wants done with the faulting access.
enum class FaultDisposition : std::uint8_t {
  kRetry,     // complete the access (guard faults) or report the fault to the caller
  kSuppress,  // drop the access silently; the caller sees success
  kUnhandled, // abort the scenario
};

using FaultHandler = std::function<FaultDisposition(const Fault&)>;

/// Thrown when a fault reaches no handler willing to deal with it.
class UnhandledFault : public SimError {
 public:
  explicit UnhandledFault(const Fault& f);
  const Fault& fault() const noexcept { return fault_; }

 private:
  Fault fault_;
};

// ---------------------------------------------------------------------------
// Event log

enum class EventKind : std::uint8_t {
  kAlloc,
  kProtect,
  kWrite,
  kRead,
  kFault,
  kGuardArm,
  kLoad,
  kHookInstall,
  kHookRemove,
  kApiCall,
  kDecision,
  kTamper,
  kWarning,
  kKeylog,
  kTruth,
  kTerminate,
  kScenarioWarning,
  kNetSend,
  kTruthLeak,
  kDefenseActive,
  kScenario,
  kThreadStart,
  kAttack,
};

const char* to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(std::string_view s);

/// Outcome recorded in the value field of kWrite events.
enum class WriteOutcome : std::int64_t { kLanded = 0, kSuppressed = 1, kFaulted = 2 };

/// One log entry. Field usage depends on kind; see event_log.cpp for the
/// serialized form.
struct Event {
  Tick tick = 0;
  ActorId actor = kSystemActor;
  EventKind kind = EventKind::kAlloc;
  Address addr = 0;
  std::uint32_t len = 0;
  std::int64_t value = 0;
  std::int64_t aux = 0;
  std::string name;
  std::string text;
  std::string note;

  bool operator==(const Event&) const = default;
};

class EventLog {
 public:
  void append(Event e) { entries_.push_back(std::move(e)); }
  const std::vector<Event>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// FNV-1a/64 over the serialized lines.
  std::uint64_t digest() const;

  std::string to_jsonl() const;
  static EventLog from_jsonl(std::string_view text);

 private:
  std::vector<Event> entries_;
};

std::string serialize_event(const Event& e);
Event parse_event(std::string_view line);

// ---------------------------------------------------------------------------
// Logical clock

using TaskId = std::uint64_t;
using TaskFn = std::function<void(Tick now)>;

struct FiredTask {
  Tick tick;
  int priority;
  TaskId id;
  bool operator==(const FiredTask&) const = default;
};

/// Deterministic task queue ordered by (due tick, priority, task id).
class Scheduler {
 public:
  Tick now() const { return now_; }

  /// period == 0 means one-shot.
  TaskId schedule(TaskFn fn, Tick due, int priority, Tick period = 0);
  void cancel(TaskId id);
  bool is_scheduled(TaskId id) const { return tasks_.contains(id); }

  /// Runs every task due at or before now + n, then sets now to now + n.
  std::vector<FiredTask> advance(Tick n);

 private:
  struct Task {
    TaskFn fn;
    Tick due;
    int priority;
    Tick period;
  };
  using Key = std::tuple<Tick, int, TaskId>;

  Tick now_ = 0;
  TaskId next_id_ = 1;
  std::map<TaskId, Task> tasks_;
  std::set<Key> queue_;
};

// ---------------------------------------------------------------------------
// Memory

struct Page {
  Address base = 0;
  Bytes bytes;
  Protection protection = Protection::kReadWrite;  // base protection, never kGuard
  bool guard = false;

  Protection effective() const { return guard ? Protection::kGuard : protection; }
};

struct ReadResult {
  Bytes bytes;
  std::optional<Fault> fault;
  bool ok() const { return !fault.has_value(); }
};

struct WriteResult {
  std::optional<Fault> fault;
  bool suppressed = false;
  bool ok() const { return !fault.has_value(); }
};

/// The simulated process: paged memory, a logical clock, a single fault
/// handler and an append-only event log. Single-threaded by construction.
class SimProcess {
 public:
  SimProcess() = default;
  SimProcess(const SimProcess&) = delete;
  SimProcess& operator=(const SimProcess&) = delete;

  Address alloc_region(std::uint32_t size, Protection protection, ActorId actor = kSystemActor);

  ReadResult read_bytes(ActorId actor, Address addr, std::uint32_t len);
  WriteResult write_bytes(ActorId actor, Address addr, std::span<const Byte> data);

  /// Instruction fetch used by the interpreter. Not logged.
  ReadResult fetch(ActorId actor, Address addr, std::uint32_t len);

  /// Changes protection page-wise and returns each page's prior (effective)
  /// protection. kGuard arms the one-shot guard over the base protection;
  /// other values replace the base protection and leave an armed guard armed.
  std::vector<Protection> protect(ActorId actor, Address addr, std::uint32_t len,
                                  Protection new_protection);

  /// Queue re-arming of the guard on the page holding addr. Applied when the
  /// in-flight access completes, or immediately if none is in flight.
  void request_guard_rearm(Address addr, ActorId actor = kDefenseActor);

  /// Host-side inspection: no protection checks, no faults, no log entry.
  Bytes peek(Address addr, std::uint32_t len) const;
  Protection protection_at(Address addr) const;
  bool is_mapped(Address addr, std::uint32_t len) const;

  void set_fault_handler(FaultHandler handler) { handler_ = std::move(handler); }

  Scheduler& clock() { return clock_; }
  const Scheduler& clock() const { return clock_; }
  Tick now() const { return clock_.now(); }

  EventLog& log() { return log_; }
  const EventLog& log() const { return log_; }
  void emit(Event e);

  std::size_t page_count() const { return pages_.size(); }

  /// RAII marker for one logical access; guard re-arms wait for the
  /// outermost scope to close.
  class AccessScope {
   public:
    explicit AccessScope(SimProcess& p) : p_(p) { ++p_.access_depth_; }
    ~AccessScope();
    AccessScope(const AccessScope&) = delete;
    AccessScope& operator=(const AccessScope&) = delete;

   private:
    SimProcess& p_;
  };

 private:
  enum class AccessStatus { kOk, kSuppressed, kFaulted };

  AccessStatus check_access(ActorId actor, Address addr, std::uint32_t len, Access access,
                            std::optional<Fault>& fault_out);
  FaultDisposition deliver(const Fault& f);
  std::vector<Page*> pages_for(Address addr, std::uint32_t len);
  void copy_out(Address addr, std::uint32_t len, Bytes& out) const;
  void apply_pending_rearms();

  std::map<Address, Page> pages_;
  Address next_region_ = 0x00400000;
  FaultHandler handler_;
  Scheduler clock_;
  EventLog log_;
  int access_depth_ = 0;
  std::vector<std::pair<Address, ActorId>> pending_rearm_;
};

}  // namespace hookdecoy
