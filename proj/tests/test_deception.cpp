#include "doctest.h"

#include "hookdecoy/deception.hpp"
#include "hookdecoy/harness.hpp"
#include "test_support.hpp"

using namespace hookdecoy;
using testsupport::keylog_text;
using testsupport::typing_scenario;

TEST_CASE("case flip of every third character") {
  // Hand oracle: indices 2 and 5 of "password" are 's' and 'o'.
  CHECK(case_flip_every_third("password") == "paSswOrd");
  CHECK(case_flip_every_third("ab") == "ab");
  CHECK(case_flip_every_third("12345") == "12345");
  CHECK(flip_case('a') == 'A');
  CHECK(flip_case('Z') == 'z');
  CHECK(flip_case('!') == '!');
}

TEST_CASE("policy validation") {
  DeceptionPolicy p;
  CHECK_NOTHROW(p.validate());
  p.masking_ratio = 1.5;
  CHECK_THROWS_AS(p.validate(), SimError);
  p.masking_ratio = 0.5;
  p.mode = DeceptionMode::kInputPerturbation;
  p.perturb_ops.clear();
  CHECK_THROWS_AS(p.validate(), SimError);
  DeceptionPolicy d;
  d.decoy_text.clear();
  d.decoy_script.clear();
  CHECK_THROWS_AS(d.validate(), SimError);
}

TEST_CASE("default decoy script types the decoy credential") {
  DeceptionPolicy p;
  CHECK(typed_text(p.effective_decoy_script()) == "hrSmith2025!\t\n");
}

TEST_CASE("decoy session lifecycle") {
  DecoySession s(5);
  CHECK_FALSE(s.observe(1, false));
  CHECK(s.observe(2, true));
  CHECK(s.state() == DecoySession::State::kPlaying);
  s.finish();
  CHECK_FALSE(s.observe(3, true));
  CHECK_FALSE(s.observe(7, false));
  CHECK(s.state() == DecoySession::State::kCooldown);
  CHECK_FALSE(s.observe(8, false));
  CHECK(s.observe(9, true));
}

TEST_CASE("perturbation at ratio 1 with case flip shows paSswOrd on every keystroke channel") {
  for (Technique t : {Technique::kPolling, Technique::kMsgQueue, Technique::kOsHook}) {
    CAPTURE(to_string(t));
    ScenarioConfig cfg = typing_scenario("password", t);
    cfg.policy.mode = DeceptionMode::kInputPerturbation;
    cfg.policy.masking_ratio = 1.0;
    cfg.policy.perturb_ops = {PerturbOp::kCaseFlipEvery3rd};
    const RunResult r = run_scenario(cfg);
    CHECK(keylog_text(r) == "paSswOrd");
  }
}

TEST_CASE("perturbation at ratio 0 leaves the keylog truthful") {
  for (Technique t : {Technique::kPolling, Technique::kMsgQueue, Technique::kOsHook}) {
    CAPTURE(to_string(t));
    ScenarioConfig cfg = typing_scenario("password", t);
    cfg.policy.mode = DeceptionMode::kInputPerturbation;
    cfg.policy.masking_ratio = 0.0;
    cfg.policy.perturb_ops = {PerturbOp::kRandomAdjacentSwap, PerturbOp::kBenignExtraKey};
    const RunResult r = run_scenario(cfg);
    CHECK(keylog_text(r) == "password");
    CHECK(r.report.modified_units == 0);
  }
}

TEST_CASE("decoy injection replaces typed secrets on every keystroke channel") {
  for (Technique t : {Technique::kPolling, Technique::kMsgQueue, Technique::kOsHook}) {
    CAPTURE(to_string(t));
    // No position of the truth coincides with the decoy.
    const RunResult r = run_scenario(typing_scenario("qwerty99", t));
    CHECK(keylog_text(r) == "hrSmith2025!\t\n");
    CHECK(r.report.decoy_purity == 1.0);
    CHECK(r.report.true_leak_count == 0);
  }
}

TEST_CASE("decoy stays idle without user activity") {
  ScenarioConfig cfg = typing_scenario("");
  cfg.user_script.keystrokes.clear();
  const RunResult r = run_scenario(cfg);
  CHECK(r.keylog.entries.empty());
}

TEST_CASE("hook registration policy") {
  ScenarioConfig cfg = typing_scenario("secret", Technique::kOsHook);
  SUBCASE("block fails the registration") {
    cfg.policy.hook_registration = HookRegistrationPolicy::kBlock;
    const RunResult r = run_scenario(cfg);
    CHECK(r.keylog.entries.empty());
  }
  SUBCASE("override feeds the decoy") {
    const RunResult r = run_scenario(cfg);
    CHECK(keylog_text(r) == "hrSmith2025!\t\n");
  }
}

TEST_CASE("clipboard and form posts are substituted") {
  ScenarioConfig cfg = typing_scenario("x", Technique::kClipboard);
  cfg.adversary.techniques = {Technique::kClipboard, Technique::kFormGrab};
  cfg.user_script.clipboard_sets = {{12, "secret-token"}};
  cfg.user_script.form_posts = {{15, "https://bank.example/login", "username=alice&password=pw1&x=1"}};
  const RunResult r = run_scenario(cfg);
  std::string clip, form;
  for (const auto& e : r.keylog.entries)
    if (e.channel == "CLIPBOARD") clip += e.text;
  for (const auto& e : r.log.entries())
    if (e.kind == EventKind::kNetSend && is_adversary(e.actor)) form += e.text;
  CHECK(clip == "hrSmith2025!");
  CHECK(form.find("alice") == std::string::npos);
  CHECK(form.find("pw1") == std::string::npos);
  CHECK(form.find("x=1") != std::string::npos);

  std::string sent;
  for (const auto& e : r.log.entries())
    if (e.kind == EventKind::kNetSend && e.actor == kAppActor) sent += e.text;
  CHECK(sent == "username=alice&password=pw1&x=1");
}

TEST_CASE("environment spoofing") {
  SimProcess process;
  UserScript script;
  Environment env{.instrumented = true, .tick_ms = 10, .jitter_ms = 7, .seed = 3};
  NativeApi native(process, script, env);
  CHECK(native.invoke("IsDebuggerPresent", ActorId{16}, {}).num == 1);

  DeceptionPolicy policy;
  DeceptionEngine engine(process, native, policy);
  CallContext ctx{.caller = ActorId{16}, .api = "IsDebuggerPresent"};
  CHECK(engine.handle(ctx, {}).num == 0);

  ctx.api = "GetTickCount";
  const auto a = engine.handle(ctx, {}).num;
  process.clock().advance(5);
  const auto b = engine.handle(ctx, {}).num;
  CHECK(b - a == 5 * 10);

  policy.spoof_environment = false;
  DeceptionEngine honest(process, native, policy);
  CallContext c2{.caller = ActorId{16}, .api = "IsDebuggerPresent"};
  CHECK(honest.handle(c2, {}).num == 1);

  CallContext benign{.caller = kAppActor, .api = "IsDebuggerPresent"};
  CHECK(engine.handle(benign, {}).num == 1);
}

TEST_CASE("native semantics") {
  SimProcess process;
  UserScript script;
  script.keystrokes = keystrokes_for_text("P", 3, 4);
  script.clipboard_sets = {{2, "secret"}};
  NativeApi native(process, script, {});
  process.clock().advance(3);
  CHECK((native.invoke("GetAsyncKeyState", ActorId{16}, {.arg = 'P'}).num & 0x8000) != 0);
  CHECK(native.invoke("GetClipboardData", ActorId{16}, {}).text == "secret");
  native.invoke("WSASend", ActorId{16}, {.text = "body"});
  CHECK(process.log().entries().back().kind == EventKind::kNetSend);
  CHECK(process.log().entries().back().text == "body");
  CHECK_THROWS_AS(native.invoke("NoSuchApi", ActorId{16}, {}), SimError);
}
