#include "hookdecoy/simcore.hpp"

#include <algorithm>
#include <cstdio>

namespace hookdecoy {

const char* to_string(Protection p) {
  switch (p) {
    case Protection::kReadWrite: return "READ_WRITE";
    case Protection::kExecuteRead: return "EXECUTE_READ";
    case Protection::kReadOnly: return "READ_ONLY";
    case Protection::kNoAccess: return "NO_ACCESS";
    case Protection::kGuard: return "GUARD";
  }
  return "?";
}

const char* to_string(Access a) {
  switch (a) {
    case Access::kRead: return "READ";
    case Access::kWrite: return "WRITE";
    case Access::kExecute: return "EXECUTE";
  }
  return "?";
}

const char* to_string(FaultKind k) {
  switch (k) {
    case FaultKind::kGuardViolation: return "GUARD_VIOLATION";
    case FaultKind::kNoAccessViolation: return "NO_ACCESS_VIOLATION";
    case FaultKind::kBadAddress: return "BAD_ADDRESS";
  }
  return "?";
}

namespace {

std::string describe(const Fault& f) {
  return std::string(to_string(f.kind)) + " at 0x" + [&] {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", f.address);
    return std::string(buf);
  }() + " (" + to_string(f.access) + ", actor " + std::to_string(to_underlying(f.actor)) + ")";
}

bool permits(Protection p, Access a) {
  switch (a) {
    case Access::kRead:
      return p == Protection::kReadWrite || p == Protection::kExecuteRead ||
             p == Protection::kReadOnly;
    case Access::kWrite:
      return p == Protection::kReadWrite;
    case Access::kExecute:
      return p == Protection::kExecuteRead;
  }
  return false;
}

}  // namespace

UnhandledFault::UnhandledFault(const Fault& f)
    : SimError(ErrorCode::kUnhandledFault, describe(f)), fault_(f) {}

// ---------------------------------------------------------------------------
// Scheduler

TaskId Scheduler::schedule(TaskFn fn, Tick due, int priority, Tick period) {
  const TaskId id = next_id_++;
  tasks_.emplace(id, Task{std::move(fn), due, priority, period});
  queue_.emplace(due, priority, id);
  return id;
}

void Scheduler::cancel(TaskId id) {
  auto it = tasks_.find(id);
  if (it == tasks_.end()) return;
  queue_.erase({it->second.due, it->second.priority, id});
  tasks_.erase(it);
}

std::vector<FiredTask> Scheduler::advance(Tick n) {
  const Tick target = now_ + n;
  std::vector<FiredTask> fired;
  while (!queue_.empty()) {
    auto [due, priority, id] = *queue_.begin();
    if (due > target) break;
    queue_.erase(queue_.begin());
    now_ = std::max(now_, due);
    fired.push_back({due, priority, id});
    // Copy the callable: the task may cancel or reschedule itself.
    TaskFn fn = tasks_.at(id).fn;
    const Tick period = tasks_.at(id).period;
    if (period > 0) {
      tasks_.at(id).due = due + period;
      queue_.emplace(due + period, priority, id);
    } else {
      tasks_.erase(id);
    }
    fn(now_);
  }
  now_ = target;
  return fired;
}

// ---------------------------------------------------------------------------
// SimProcess

SimProcess::AccessScope::~AccessScope() {
  if (--p_.access_depth_ == 0) p_.apply_pending_rearms();
}

void SimProcess::emit(Event e) {
  e.tick = clock_.now();
  log_.append(std::move(e));
}

Address SimProcess::alloc_region(std::uint32_t size, Protection protection, ActorId actor) {
  if (size == 0) throw SimError(ErrorCode::kBadArgument, "alloc_region size must be > 0");
  if (protection == Protection::kGuard)
    throw SimError(ErrorCode::kBadArgument, "regions are allocated without a guard");
  const std::uint32_t pages = (size + kPageSize - 1) / kPageSize;
  const Address base = next_region_;
  for (std::uint32_t i = 0; i < pages; ++i) {
    Page p;
    p.base = base + i * kPageSize;
    p.bytes.assign(kPageSize, 0);
    p.protection = protection;
    pages_.emplace(p.base, std::move(p));
  }
  // One unmapped page between regions so overruns surface as BAD_ADDRESS.
  next_region_ = base + (pages + 1) * kPageSize;
  emit({.actor = actor,
        .kind = EventKind::kAlloc,
        .addr = base,
        .len = pages * kPageSize,
        .value = static_cast<std::int64_t>(protection)});
  return base;
}

std::vector<Page*> SimProcess::pages_for(Address addr, std::uint32_t len) {
  std::vector<Page*> out;
  const std::uint64_t end = static_cast<std::uint64_t>(addr) + len;
  for (std::uint64_t b = page_base(addr); b < end; b += kPageSize) {
    auto it = pages_.find(static_cast<Address>(b));
    if (it == pages_.end()) return {};
    out.push_back(&it->second);
  }
  return out;
}

bool SimProcess::is_mapped(Address addr, std::uint32_t len) const {
  if (len == 0) return false;
  const std::uint64_t end = static_cast<std::uint64_t>(addr) + len;
  for (std::uint64_t b = page_base(addr); b < end; b += kPageSize)
    if (!pages_.contains(static_cast<Address>(b))) return false;
  return true;
}

Protection SimProcess::protection_at(Address addr) const {
  auto it = pages_.find(page_base(addr));
  if (it == pages_.end()) throw SimError(ErrorCode::kBadAddress, "unmapped address");
  return it->second.effective();
}

void SimProcess::copy_out(Address addr, std::uint32_t len, Bytes& out) const {
  out.resize(len);
  for (std::uint32_t i = 0; i < len; ++i) {
    const Address a = addr + i;
    out[i] = pages_.at(page_base(a)).bytes[a - page_base(a)];
  }
}

Bytes SimProcess::peek(Address addr, std::uint32_t len) const {
  if (!is_mapped(addr, len)) throw SimError(ErrorCode::kBadAddress, "peek of unmapped range");
  Bytes out;
  copy_out(addr, len, out);
  return out;
}

FaultDisposition SimProcess::deliver(const Fault& f) {
  emit({.actor = f.actor,
        .kind = EventKind::kFault,
        .addr = f.address,
        .value = static_cast<std::int64_t>(f.kind),
        .aux = static_cast<std::int64_t>(f.access)});
  if (!handler_) return FaultDisposition::kRetry;
  const FaultDisposition d = handler_(f);
  if (d == FaultDisposition::kUnhandled) throw UnhandledFault(f);
  return d;
}

SimProcess::AccessStatus SimProcess::check_access(ActorId actor, Address addr, std::uint32_t len,
                                                  Access access,
                                                  std::optional<Fault>& fault_out) {
  auto pages = pages_for(addr, len);
  if (pages.empty()) {
    Address bad = addr;
    while (is_mapped(page_base(bad), 1)) bad = page_base(bad) + kPageSize;
    fault_out = Fault{FaultKind::kBadAddress, bad, access, actor};
    deliver(*fault_out);
    return AccessStatus::kFaulted;
  }
  // Guard pass: one-shot, the attribute is cleared before delivery.
  for (Page* p : pages) {
    if (!p->guard) continue;
    p->guard = false;
    const Fault f{FaultKind::kGuardViolation, std::max(addr, p->base), access, actor};
    if (deliver(f) == FaultDisposition::kSuppress) return AccessStatus::kSuppressed;
  }
  for (Page* p : pages) {
    if (permits(p->protection, access)) continue;
    fault_out = Fault{FaultKind::kNoAccessViolation, std::max(addr, p->base), access, actor};
    if (deliver(*fault_out) == FaultDisposition::kSuppress) {
      fault_out.reset();
      return AccessStatus::kSuppressed;
    }
    return AccessStatus::kFaulted;
  }
  return AccessStatus::kOk;
}

ReadResult SimProcess::read_bytes(ActorId actor, Address addr, std::uint32_t len) {
  if (len == 0) throw SimError(ErrorCode::kBadArgument, "read_bytes len must be > 0");
  AccessScope scope(*this);
  ReadResult r;
  const AccessStatus st = check_access(actor, addr, len, Access::kRead, r.fault);
  if (st == AccessStatus::kOk) copy_out(addr, len, r.bytes);
  emit({.actor = actor,
        .kind = EventKind::kRead,
        .addr = addr,
        .len = len,
        .value = st == AccessStatus::kOk ? 0 : 1});
  return r;
}

ReadResult SimProcess::fetch(ActorId actor, Address addr, std::uint32_t len) {
  AccessScope scope(*this);
  ReadResult r;
  if (check_access(actor, addr, len, Access::kExecute, r.fault) == AccessStatus::kOk)
    copy_out(addr, len, r.bytes);
  else if (!r.fault)
    r.fault = Fault{FaultKind::kNoAccessViolation, addr, Access::kExecute, actor};
  return r;
}

WriteResult SimProcess::write_bytes(ActorId actor, Address addr, std::span<const Byte> data) {
  if (data.empty()) throw SimError(ErrorCode::kBadArgument, "write_bytes data must be nonempty");
  AccessScope scope(*this);
  WriteResult w;
  const auto len = static_cast<std::uint32_t>(data.size());
  const AccessStatus st = check_access(actor, addr, len, Access::kWrite, w.fault);
  WriteOutcome outcome = WriteOutcome::kFaulted;
  if (st == AccessStatus::kOk) {
    for (std::uint32_t i = 0; i < len; ++i) {
      const Address a = addr + i;
      pages_.at(page_base(a)).bytes[a - page_base(a)] = data[i];
    }
    outcome = WriteOutcome::kLanded;
  } else if (st == AccessStatus::kSuppressed) {
    w.suppressed = true;
    outcome = WriteOutcome::kSuppressed;
  }
  emit({.actor = actor,
        .kind = EventKind::kWrite,
        .addr = addr,
        .len = len,
        .value = static_cast<std::int64_t>(outcome)});
  return w;
}

std::vector<Protection> SimProcess::protect(ActorId actor, Address addr, std::uint32_t len,
                                            Protection new_protection) {
  auto pages = pages_for(addr, len == 0 ? 1 : len);
  if (pages.empty()) throw SimError(ErrorCode::kBadAddress, "protect on unmapped range");
  std::vector<Protection> old;
  old.reserve(pages.size());
  for (Page* p : pages) {
    old.push_back(p->effective());
    if (new_protection == Protection::kGuard)
      p->guard = true;
    else
      p->protection = new_protection;
  }
  emit({.actor = actor,
        .kind = EventKind::kProtect,
        .addr = addr,
        .len = len,
        .value = static_cast<std::int64_t>(new_protection),
        .aux = static_cast<std::int64_t>(old.front())});
  return old;
}

void SimProcess::request_guard_rearm(Address addr, ActorId actor) {
  pending_rearm_.emplace_back(page_base(addr), actor);
  if (access_depth_ == 0) apply_pending_rearms();
}

void SimProcess::apply_pending_rearms() {
  auto pending = std::move(pending_rearm_);
  pending_rearm_.clear();
  for (auto [base, actor] : pending) {
    auto it = pages_.find(base);
    if (it == pages_.end() || it->second.guard) continue;
    it->second.guard = true;
    emit({.actor = actor, .kind = EventKind::kGuardArm, .addr = base, .len = kPageSize});
  }
}

}  // namespace hookdecoy
