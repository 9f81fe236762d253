#include "doctest.h"

#include <set>

#include "hookdecoy/adversary.hpp"
#include "hookdecoy/hooklayer.hpp"
#include "hookdecoy/interp.hpp"
#include "hookdecoy/loader.hpp"

using namespace hookdecoy;

namespace {

struct World {
  SimProcess process;
  Loader loader{process, TemplateManifest::load_default()};
  const ModuleImage& user32 = loader.load_module("user32.sim", "user32.sim");

  GateReached run(Address entry) {
    ExecContext ctx;
    ctx.caller = ActorId{16};
    return execute_at(process, loader, ctx, entry);
  }
};

// Independent reference: FNV-1a/64 written out from its definition.
std::uint64_t reference_fnv(std::span<const Byte> bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (Byte b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint32_t le32(const Prologue& p, std::size_t at) {
  return p[at] | (p[at + 1] << 8) | (p[at + 2] << 16) | (static_cast<std::uint32_t>(p[at + 3]) << 24);
}

bool contains_ff25(const Prologue& p) {
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    if (p[i] == 0xFF && p[i + 1] == 0x25) return true;
  return false;
}

}  // namespace

TEST_CASE("decode table entries") {
  const Bytes nop = {0x90};
  CHECK(decode(nop, 0).instruction.op == Opcode::kNop);
  CHECK(decode(nop, 0).length == 1);

  const Bytes jmp = {0xE9, 0, 0, 0, 0};
  const Decoded d = decode(jmp, 0);
  CHECK(d.instruction == Instruction{Opcode::kJmpRel32, 0});
  CHECK(d.length == 5);

  const Bytes gate = {0xF5, 0x2A, 0, 0, 0};
  CHECK(decode(gate, 0).instruction == Instruction{Opcode::kDetourGate, 42});

  CHECK_THROWS_AS(decode(Bytes{0xCC}, 0), SimError);
  CHECK_THROWS_AS(decode(Bytes{0xE9, 1}, 0), SimError);
}

TEST_CASE("encode and decode are inverse over every opcode") {
  const Opcode all[] = {Opcode::kJmpRel32, Opcode::kJmpIndirect, Opcode::kPushImm32, Opcode::kRet,
                        Opcode::kMovRegImm32, Opcode::kJmpReg, Opcode::kNop, Opcode::kNativeGate,
                        Opcode::kDetourGate};
  for (Opcode op : all) {
    const bool has_operand = encoded_length(op) >= 5;
    const Instruction i{op, has_operand ? 0xDEADBEEFu : 0u};
    const Bytes b = encode(i);
    CHECK(b.size() == encoded_length(op));
    const Decoded d = decode(b, 0);
    CHECK(d.instruction == i);
    CHECK(d.length == b.size());
    CHECK(encode(d.instruction) == b);
  }
  CHECK(encode({Opcode::kJmpIndirect, 0}).at(1) == 0x25);
  CHECK(encode({Opcode::kJmpReg, 0}) == Bytes{0xFF, 0xE0});
}

TEST_CASE("clean export reaches its native gate") {
  World w;
  const Address entry = w.loader.get_proc_address(w.user32, "GetKeyState");
  const GateReached g = w.run(entry);
  CHECK(g.kind == GateReached::Kind::kNative);
  CHECK(g.export_name == "GetKeyState");
  CHECK(g.module == "user32.sim");
  CHECK(g.steps == kNativeCallSteps);
}

TEST_CASE("malformed patches are diagnosed") {
  World w;
  const Address entry = w.loader.get_proc_address(w.user32, "GetKeyState");
  w.process.protect(kDefenseActor, entry, 16, Protection::kReadWrite);
  SUBCASE("self loop exhausts the step budget") {
    w.process.write_bytes(kDefenseActor, entry, encode({Opcode::kJmpRel32, static_cast<std::uint32_t>(-5)}));
    w.process.protect(kDefenseActor, entry, 16, Protection::kExecuteRead);
    CHECK_THROWS_AS(w.run(entry), SimError);
  }
  SUBCASE("jump into a data page is not executable") {
    const Address data = w.process.alloc_region(4096, Protection::kReadWrite);
    w.process.write_bytes(kDefenseActor, entry, encode({Opcode::kPushImm32, data}));
    w.process.write_bytes(kDefenseActor, entry + 5, Bytes{0xC3});
    w.process.protect(kDefenseActor, entry, 16, Protection::kExecuteRead);
    w.process.set_fault_handler([](const Fault&) { return FaultDisposition::kRetry; });
    CHECK_THROWS_AS(w.run(entry), SimError);
  }
}

TEST_CASE("trampoline layouts") {
  const Address entry = 0x400000;
  SUBCASE("classic jump with zero displacement") {
    const Trampoline t = build_trampoline(entry + 5, entry, TrampolineKind::kClassicJmp, 0);
    CHECK(t.layout[0] == 0xE9);
    CHECK(le32(t.layout, 1) == 0);
    for (std::size_t i = 5; i < kPrologueLen; ++i) CHECK(t.layout[i] == 0x90);
  }
  SUBCASE("classic jump displacement is measured from the instruction end") {
    const Address stub = 0x500010;
    const Trampoline t = build_trampoline(stub, entry, TrampolineKind::kClassicJmp, 0);
    CHECK(le32(t.layout, 1) == stub - (entry + 5));
  }
  SUBCASE("push/ret with one pad") {
    const Address stub = 0x500020;
    const Trampoline t = build_trampoline(stub, entry, TrampolineKind::kPushRet, 1);
    CHECK(t.layout[0] == 0x90);
    CHECK(t.layout[1] == 0x68);
    CHECK(le32(t.layout, 2) == stub);
    CHECK(t.layout[6] == 0xC3);
    for (std::size_t i = 7; i < kPrologueLen; ++i) CHECK(t.layout[i] == 0x90);
    CHECK(t.variant.pre_pad + trampoline_body_length(t.variant.kind) + t.variant.post_pad == kPrologueLen);
  }
}

TEST_CASE("every variant and pad reaches the same detour gate") {
  for (TrampolineKind kind : {TrampolineKind::kClassicJmp, TrampolineKind::kPushRet, TrampolineKind::kMovJmpReg}) {
    const std::uint32_t max_pad = kind == TrampolineKind::kClassicJmp ? 0 : 3;
    for (std::uint32_t pad = 0; pad <= max_pad; ++pad) {
      World w;
      DetourArena arena(w.process, kDefenseActor);
      Rng rng(7);
      const Address stub = arena.allocate(0x123, rng);
      const Address entry = w.loader.get_proc_address(w.user32, "GetAsyncKeyState");
      const Trampoline t = build_trampoline(stub, entry, kind, pad);
      CAPTURE(to_string(kind));
      CAPTURE(pad);
      CHECK(t.variant.pre_pad + trampoline_body_length(kind) + t.variant.post_pad == kPrologueLen);
      w.process.protect(kDefenseActor, entry, 16, Protection::kReadWrite);
      w.process.write_bytes(kDefenseActor, entry, t.layout);
      w.process.protect(kDefenseActor, entry, 16, Protection::kExecuteRead);
      const GateReached g = w.run(entry);
      CHECK(g.kind == GateReached::Kind::kDetour);
      CHECK(g.handler_id == 0x123);
      CHECK(g.gate_address == stub);
    }
  }
}

TEST_CASE("prologue hash matches FNV-1a and detects every single-byte flip") {
  const Trampoline t = build_trampoline(0x500000, 0x400000, TrampolineKind::kMovJmpReg, 2);
  const std::uint64_t base = prologue_hash(t.layout);
  CHECK(base == reference_fnv(t.layout));
  std::set<std::uint64_t> seen{base};
  for (std::size_t pos = 0; pos < kPrologueLen; ++pos)
    for (int delta = 1; delta < 256; ++delta) {
      Prologue p = t.layout;
      p[pos] = static_cast<Byte>(p[pos] ^ delta);
      const std::uint64_t h = prologue_hash(p);
      REQUIRE(h == reference_fnv(p));
      REQUIRE(h != base);
      seen.insert(h);
    }
  CHECK(seen.size() == 1 + kPrologueLen * 255);
}

TEST_CASE("patched hash differs from the clean hash for every variant and pad") {
  World w;
  const LibraryTemplate* tpl = w.loader.manifest().find("user32.sim");
  REQUIRE(tpl);
  for (const ExportEntry& e : tpl->exports) {
    const Bytes clean = w.loader.manifest().clean_prologue(*tpl, e);
    const Address entry = w.user32.base + e.offset;
    for (TrampolineKind kind : {TrampolineKind::kClassicJmp, TrampolineKind::kPushRet, TrampolineKind::kMovJmpReg})
      for (std::uint32_t pad = 0; pad <= (kind == TrampolineKind::kClassicJmp ? 0u : 3u); ++pad) {
        const Trampoline t = build_trampoline(0x500000 + 16 * pad, entry, kind, pad);
        REQUIRE(prologue_hash(t.layout) != prologue_hash(clean));
      }
  }
}

TEST_CASE("obfuscated generation never emits scanner signatures") {
  int variants[3] = {0, 0, 0};
  std::set<std::uint32_t> pads;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng = Rng::derive(seed, kStreamTrampoline);
    const Trampoline t = generate_trampoline(0x500000, 0x400000, true, rng);
    REQUIRE(t.layout[0] != 0xE9);
    REQUIRE_FALSE(contains_ff25(t.layout));
    REQUIRE(t.variant.kind != TrampolineKind::kClassicJmp);
    for (const ScanPattern& sp : default_scan_patterns()) REQUIRE_FALSE(sp.matches(t.layout));
    ++variants[static_cast<int>(t.variant.kind)];
    pads.insert(t.variant.pre_pad);
  }
  CHECK(variants[1] > 0);
  CHECK(variants[2] > 0);
  CHECK(pads == std::set<std::uint32_t>{0, 1, 2, 3});

  Rng rng(1);
  const Trampoline classic = generate_trampoline(0x500000, 0x400000, false, rng);
  CHECK(classic.layout[0] == 0xE9);
  CHECK(default_scan_patterns()[0].matches(classic.layout));
}

TEST_CASE("scan patterns") {
  const ScanPattern e9{{0xE9}, 0};
  const ScanPattern ff25{{0xFF, 0x25}, std::nullopt};
  Prologue p{};
  p.fill(0x90);
  CHECK_FALSE(e9.matches(p));
  CHECK_FALSE(ff25.matches(p));
  p[3] = 0xE9;
  CHECK_FALSE(e9.matches(p));
  p[0] = 0xE9;
  CHECK(e9.matches(p));
  p[14] = 0xFF;
  p[15] = 0x25;
  CHECK(ff25.matches(p));
  p[14] = 0x25;
  p[15] = 0xFF;
  CHECK_FALSE(ff25.matches(p));
}

TEST_CASE("install, execute and remove a hook") {
  World w;
  HookLayer hooks(w.process);
  Rng rng(11);
  const Address entry = w.loader.get_proc_address(w.user32, "GetAsyncKeyState");
  const Bytes before = w.process.peek(entry, 16);

  SUBCASE("classic") {
    const HookRecord& rec = hooks.install_hook(w.user32, "GetAsyncKeyState", 0x100, false, rng);
    CHECK(w.process.peek(entry, 1) == Bytes{0xE9});
    CHECK(rec.expected_hash == prologue_hash(rec.expected_layout));
    CHECK(rec.expected_hash != prologue_hash(rec.original_prologue));
    CHECK(w.process.protection_at(entry) == Protection::kExecuteRead);
    CHECK(w.run(entry).handler_id == 0x100);
    CHECK_THROWS_AS(hooks.install_hook(w.user32, "GetAsyncKeyState", 0x100, false, rng), SimError);

    const HookRecord copy = rec;
    hooks.remove_hook(rec);
    CHECK(w.process.peek(entry, 16) == before);
    CHECK(w.run(entry).kind == GateReached::Kind::kNative);
    CHECK_THROWS_AS(hooks.remove_hook(copy), SimError);
    CHECK(hooks.registry().size() == 0);
  }
  SUBCASE("obfuscated") {
    hooks.install_hook(w.user32, "GetAsyncKeyState", 0x100, true, rng);
    const Bytes now = w.process.peek(entry, 16);
    std::size_t i = 0;
    while (now[i] == 0x90) ++i;
    CHECK(i <= 3);
    CHECK((now[i] == 0x68 || now[i] == 0xB8));
    CHECK(hooks.registry().find(w.user32.base, "GetAsyncKeyState"));
    CHECK(hooks.registry().find_covering(entry + 7));
  }
  SUBCASE("missing export") {
    CHECK_THROWS_AS(hooks.install_hook(w.user32, "NoSuchApi", 0x100, true, rng), SimError);
  }
}

TEST_CASE("loader semantics") {
  World w;
  SUBCASE("clones are byte-identical with the same signature") {
    const ModuleImage& clone = w.loader.load_module("user32.sim", "u32copy.sim");
    CHECK(clone.base != w.user32.base);
    CHECK(w.process.peek(clone.base, clone.code_size) == w.process.peek(w.user32.base, w.user32.code_size));
    CHECK(w.loader.export_signature(clone) == w.loader.export_signature(w.user32));
  }
  SUBCASE("distinct templates have distinct signatures") {
    std::set<std::uint64_t> sigs;
    for (const auto& t : w.loader.manifest().templates()) {
      const ModuleImage& m = t.name == "user32.sim" ? w.user32 : w.loader.load_module(t.name, t.name);
      sigs.insert(w.loader.export_signature(m));
    }
    CHECK(sigs.size() == w.loader.manifest().templates().size());
  }
  SUBCASE("subscribers run in order before load returns") {
    std::vector<std::string> seen;
    w.loader.subscribe_load_events([&](const ModuleImage& m) { seen.push_back("a:" + m.name); });
    w.loader.subscribe_load_events([&](const ModuleImage& m) { seen.push_back("b:" + m.name); });
    w.loader.load_module("user32.sim", "u32copy.sim");
    CHECK(seen == std::vector<std::string>{"a:u32copy.sim", "b:u32copy.sim"});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(w.loader.load_module("nonexistent", "x"), SimError);
    CHECK_THROWS_AS(w.loader.get_proc_address(w.user32, "NoSuchApi"), SimError);
    CHECK(w.loader.get_proc_address(w.user32, "GetAsyncKeyState") == w.user32.base);
  }
}
