#include "doctest.h"

#include "hookdecoy/simcore.hpp"

using namespace hookdecoy;

namespace {

FaultHandler recording(std::vector<Fault>& seen, FaultDisposition d = FaultDisposition::kRetry) {
  return [&seen, d](const Fault& f) {
    seen.push_back(f);
    return d;
  };
}

}  // namespace

TEST_CASE("alloc_region zero-fills page-aligned disjoint regions") {
  SimProcess p;
  const Address a = p.alloc_region(4096, Protection::kReadWrite);
  const Address b = p.alloc_region(8192, Protection::kExecuteRead);
  CHECK(a % kPageSize == 0);
  CHECK(b % kPageSize == 0);
  CHECK((b >= a + 4096 || b + 8192 <= a));
  for (Byte x : p.peek(a, 4096)) REQUIRE(x == 0);
  CHECK(p.protection_at(b) == Protection::kExecuteRead);
  CHECK(p.protection_at(b + kPageSize) == Protection::kExecuteRead);
}

TEST_CASE("write then read round-trips on a writable page") {
  SimProcess p;
  const Address a = p.alloc_region(4096, Protection::kReadWrite);
  const Bytes data = {1, 2, 3, 4};
  REQUIRE(p.write_bytes(kAppActor, a + 10, data).ok());
  const ReadResult r = p.read_bytes(kAppActor, a + 10, 4);
  REQUIRE(r.ok());
  CHECK(r.bytes == data);
}

TEST_CASE("protection faults") {
  SimProcess p;
  std::vector<Fault> seen;
  p.set_fault_handler(recording(seen));
  const Address code = p.alloc_region(4096, Protection::kExecuteRead);

  SUBCASE("write to execute-read page is refused and memory unchanged") {
    const WriteResult w = p.write_bytes(kAppActor, code, Bytes{0xAA});
    REQUIRE_FALSE(w.ok());
    CHECK(w.fault->kind == FaultKind::kNoAccessViolation);
    CHECK(p.peek(code, 1) == Bytes{0});
  }
  SUBCASE("unmapped read reports a bad address") {
    const ReadResult r = p.read_bytes(kAppActor, 0x10, 4);
    REQUIRE_FALSE(r.ok());
    CHECK(r.fault->kind == FaultKind::kBadAddress);
  }
  SUBCASE("protect returns the prior value and is idempotent") {
    CHECK(p.protect(kDefenseActor, code, 16, Protection::kReadWrite) ==
          std::vector<Protection>{Protection::kExecuteRead});
    CHECK(p.protect(kDefenseActor, code, 16, Protection::kReadWrite) ==
          std::vector<Protection>{Protection::kReadWrite});
  }
  SUBCASE("protect on unmapped range throws") {
    CHECK_THROWS_AS(p.protect(kDefenseActor, 0x10, 4, Protection::kReadWrite), SimError);
  }
}

TEST_CASE("guard pages are one-shot") {
  SimProcess p;
  std::vector<Fault> seen;
  p.set_fault_handler(recording(seen));
  const Address a = p.alloc_region(4096, Protection::kReadWrite);
  p.protect(kDefenseActor, a, 1, Protection::kGuard);
  CHECK(p.protection_at(a) == Protection::kGuard);

  const ReadResult first = p.read_bytes(ActorId{16}, a, 4);
  CHECK(first.ok());
  const ReadResult second = p.read_bytes(ActorId{16}, a, 4);
  CHECK(second.ok());
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].kind == FaultKind::kGuardViolation);
  CHECK(seen[0].access == Access::kRead);
  CHECK(p.protection_at(a) == Protection::kReadWrite);

  p.request_guard_rearm(a);
  CHECK(p.protection_at(a) == Protection::kGuard);
}

TEST_CASE("a suppressed guarded write never lands") {
  SimProcess p;
  std::vector<Fault> seen;
  p.set_fault_handler(recording(seen, FaultDisposition::kSuppress));
  const Address a = p.alloc_region(4096, Protection::kReadWrite);
  p.protect(kDefenseActor, a, 1, Protection::kGuard);
  const WriteResult w = p.write_bytes(ActorId{16}, a, Bytes{0x55});
  CHECK(w.ok());
  CHECK(w.suppressed);
  CHECK(p.peek(a, 1) == Bytes{0});
  CHECK(seen.size() == 1);
}

TEST_CASE("an unhandled fault aborts") {
  SimProcess p;
  p.set_fault_handler([](const Fault&) { return FaultDisposition::kUnhandled; });
  const Address a = p.alloc_region(4096, Protection::kReadOnly);
  CHECK_THROWS_AS(p.write_bytes(kAppActor, a, Bytes{1}), UnhandledFault);
}

TEST_CASE("every write and protect is logged once") {
  SimProcess p;
  const Address a = p.alloc_region(4096, Protection::kReadWrite);
  const std::size_t before = p.log().size();
  p.write_bytes(kAppActor, a, Bytes{1, 2});
  p.protect(kAppActor, a, 2, Protection::kReadOnly);
  const auto& e = p.log().entries();
  REQUIRE(e.size() == before + 2);
  CHECK(e[before].kind == EventKind::kWrite);
  CHECK(e[before].len == 2);
  CHECK(e[before + 1].kind == EventKind::kProtect);
}

TEST_CASE("scheduler fires a period-10 task at 10, 20 and 30 within 35 ticks") {
  Scheduler s;
  std::vector<Tick> fired;
  s.schedule([&](Tick now) { fired.push_back(now); }, 10, 0, 10);
  s.advance(35);
  CHECK(fired == std::vector<Tick>{10, 20, 30});
  CHECK(s.now() == 35);
}

TEST_CASE("scheduler ordering and identity") {
  Scheduler s;
  std::vector<int> order;
  s.schedule([&](Tick) { order.push_back(1); }, 5, 1);
  s.schedule([&](Tick) { order.push_back(0); }, 5, 0);
  CHECK(s.advance(0).empty());
  const auto fired = s.advance(5);
  CHECK(order == std::vector<int>{0, 1});
  REQUIRE(fired.size() == 2);
  CHECK(fired[0].priority == 0);

  const TaskId id = s.schedule([&](Tick) { order.push_back(9); }, 6, 0);
  s.cancel(id);
  s.advance(5);
  CHECK(order.size() == 2);
}

TEST_CASE("event log JSONL round-trip") {
  EventLog log;
  log.append({.tick = 3, .actor = ActorId{17}, .kind = EventKind::kKeylog, .addr = 9, .len = 2,
              .value = -4, .aux = 1, .name = "POLLING", .text = "a\"b\t\n", .note = "Notepad – x"});
  log.append({.kind = EventKind::kAlloc, .addr = 4096, .len = 4096});
  const std::string text = log.to_jsonl();
  const EventLog back = EventLog::from_jsonl(text);
  CHECK(back.entries() == log.entries());
  CHECK(back.to_jsonl() == text);
  CHECK(back.digest() == log.digest());
  CHECK_THROWS(EventLog::from_jsonl("{\"t\":1,\"k\":\"NOPE\"}\n"));
}
