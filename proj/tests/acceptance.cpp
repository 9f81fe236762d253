// Acceptance checks over the shipped scenarios. Prints one PASS/FAIL line per
// criterion and exits non-zero if any fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hookdecoy/harness.hpp"
#include "hookdecoy/hooklayer.hpp"

using namespace hookdecoy;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::printf("%s  %2d  %-28s %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

ScenarioConfig scenario(const std::string& name) {
  return load_scenario(default_scenario_dir() + "/" + name + ".json");
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Runs fn(i) for i in [0, n) on all cores; each call builds its own process.
template <typename T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 16));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

std::string keylog_text(const RunResult& r) {
  std::string s;
  for (const auto& e : r.keylog.entries) s += e.text;
  return s;
}

std::size_t count_tamper(const RunResult& r, TamperKind kind) {
  return static_cast<std::size_t>(std::count_if(r.log.entries().begin(), r.log.entries().end(), [&](const Event& e) {
    return e.kind == EventKind::kTamper && e.value == static_cast<std::int64_t>(kind);
  }));
}

void criterion_1() {
  const auto t0 = Clock::now();
  const RunResult r = run_scenario(scenario("W1"));
  const double secs = seconds_since(t0);
  const auto& m = r.report;
  const bool ok = m.decoy_purity == 1.0 && m.true_leak_count == 0 && m.titles_correct &&
                  !r.keylog.entries.empty() && secs < 1.0;
  report(1, "W1 decoy purity", ok,
         fmt("purity=%.6f leaks=%llu titles=%s entries=%zu runtime=%.3fs", m.decoy_purity,
             static_cast<unsigned long long>(m.true_leak_count), m.titles_correct ? "correct" : "WRONG",
             r.keylog.entries.size(), secs));
}

void criterion_2() {
  const auto t0 = Clock::now();
  const RunResult r = run_scenario(scenario("W2"));
  const double secs = seconds_since(t0);
  const auto& m = r.report;

  const ScenarioConfig base = scenario("W2");
  const auto t1 = Clock::now();
  const auto counts = parallel_map<std::uint64_t>(100, [&](std::size_t i) {
    ScenarioConfig cfg = base;
    cfg.reseed(1000 + i);
    cfg.expect.clear();
    const RunResult run = run_scenario(cfg);
    return run.report.units == 131 ? run.report.modified_units : UINT64_MAX;
  });
  const double sweep_secs = seconds_since(t1);
  double sum = 0;
  bool all_units = true;
  for (auto c : counts) {
    all_units &= c != UINT64_MAX;
    sum += static_cast<double>(c);
  }
  const double mean = sum / counts.size();

  const bool ok = m.units == 131 && m.sweep_count == 131 && m.expected_modified == 26 && m.modified_units >= 13 &&
                  m.modified_units <= 39 && all_units && std::abs(mean - 26.0) <= 1.5 && secs < 5.0;
  report(2, "W2 masking ratio", ok,
         fmt("calls=%llu expected=%llu observed=%llu mean100=%.2f runtime=%.3fs (100 seeds %.2fs)",
             static_cast<unsigned long long>(m.units), static_cast<unsigned long long>(m.expected_modified),
             static_cast<unsigned long long>(m.modified_units), mean, secs, sweep_secs));
}

void criterion_3() {
  const ScenarioConfig s1 = scenario("S1");
  const RunResult r = run_scenario(s1);
  ScenarioConfig guarded = s1;
  guarded.integrity.guard_mode = GuardMode::kRestoreOnly;
  guarded.expect.clear();
  const RunResult g = run_scenario(guarded);
  const bool ok = !r.report.tamper_events.empty() &&
                  r.report.max_restore_latency <= s1.integrity.watchdog_period &&
                  r.report.post_restore_purity == 1.0 && !g.report.tamper_events.empty() &&
                  g.report.max_restore_latency == 0;
  report(3, "S1 self-healing bound", ok,
         fmt("latency=%llu period=%llu post_restore_purity=%.6f guarded_latency=%llu guarded_events=%zu",
             static_cast<unsigned long long>(r.report.max_restore_latency),
             static_cast<unsigned long long>(s1.integrity.watchdog_period), r.report.post_restore_purity,
             static_cast<unsigned long long>(g.report.max_restore_latency), g.report.tamper_events.size()));
}

void criterion_4() {
  bool ok = true;
  std::string detail;
  for (const char* name : {"S2", "S3"}) {
    ScenarioConfig cfg = scenario(name);
    const RunResult r = run_scenario(cfg);
    cfg.integrity.clone_rehook = false;
    cfg.expect.clear();
    const RunResult ablated = run_scenario(cfg);
    const auto& m = r.report;
    const bool this_ok = m.clone_loads >= 1 && m.clone_hook_coverage == 1.0 && m.true_leak_count == 0 &&
                         m.clone_load_precedes_call && ablated.report.decoy_purity < 1.0;
    ok &= this_ok;
    detail += fmt("%s coverage=%.2f leaks=%llu load_first=%s ablation_purity=%.3f; ", name, m.clone_hook_coverage,
                  static_cast<unsigned long long>(m.true_leak_count), m.clone_load_precedes_call ? "yes" : "NO",
                  ablated.report.decoy_purity);
  }
  report(4, "S2/S3 clone re-hook", ok, detail);
}

void criterion_5() {
  const ScenarioConfig base = scenario("S4");
  const auto warnings = parallel_map<std::uint64_t>(100, [&](std::size_t i) {
    ScenarioConfig cfg = base;
    cfg.reseed(2000 + i);
    cfg.expect.clear();
    return run_scenario(cfg).report.adversary_warnings;
  });
  const std::uint64_t obfuscated_total = std::accumulate(warnings.begin(), warnings.end(), std::uint64_t{0});

  ScenarioConfig classic = base;
  classic.obfuscate = false;
  classic.expect.clear();
  const RunResult c = run_scenario(classic);
  std::size_t hooked_targets = 0;
  for (const auto& t : base.adversary.scan_targets)
    if (std::find(base.defense.hooks.begin(), base.defense.hooks.end(), t) != base.defense.hooks.end())
      ++hooked_targets;

  std::size_t signature_hits = 0;
  constexpr std::size_t kLayouts = 1000;
  for (std::uint64_t seed = 0; seed < kLayouts; ++seed) {
    Rng rng = Rng::derive(seed, kStreamTrampoline);
    const Trampoline t = generate_trampoline(0x500000, 0x400000, true, rng);
    bool hit = t.layout[0] == 0xE9;
    for (std::size_t i = 0; i + 1 < t.layout.size(); ++i) hit |= t.layout[i] == 0xFF && t.layout[i + 1] == 0x25;
    signature_hits += hit;
  }

  const bool ok = obfuscated_total == 0 && c.report.adversary_warnings == hooked_targets && hooked_targets > 0 &&
                  signature_hits == 0;
  report(5, "S4 scan evasion", ok,
         fmt("obfuscated_warnings=%llu over 100 seeds; classic_warnings=%llu of %zu hooked targets; "
             "signature layouts=%zu/%zu",
             static_cast<unsigned long long>(obfuscated_total),
             static_cast<unsigned long long>(c.report.adversary_warnings), hooked_targets, signature_hits, kLayouts));
}

void criterion_6() {
  ScenarioConfig restore = scenario("S1");
  restore.expect.clear();
  restore.integrity.guard_mode = GuardMode::kRestoreOnly;
  const RunResult r = run_scenario(restore);
  const bool intact = !r.final_hooks.empty() &&
                      std::all_of(r.final_hooks.begin(), r.final_hooks.end(), [](const auto& h) { return h.intact; });

  ScenarioConfig strict = restore;
  strict.integrity.guard_mode = GuardMode::kStrictTerminate;
  const RunResult s = run_scenario(strict);
  const auto& e = s.log.entries();
  std::optional<std::size_t> trip;
  std::uint32_t attacker = 0;
  for (std::size_t i = 0; i < e.size() && !trip; ++i)
    if (e[i].kind == EventKind::kTamper && e[i].value == static_cast<std::int64_t>(TamperKind::kGuardTrip)) {
      trip = i;
      attacker = static_cast<std::uint32_t>(std::stoul(e[i].note));
    }
  std::size_t calls_after = 0;
  if (trip)
    for (std::size_t i = *trip + 1; i < e.size(); ++i)
      calls_after += e[i].kind == EventKind::kApiCall && to_underlying(e[i].actor) == attacker;
  const bool strict_intact =
      std::all_of(s.final_hooks.begin(), s.final_hooks.end(), [](const auto& h) { return h.intact; });

  const std::size_t trips = count_tamper(r, TamperKind::kGuardTrip);
  const std::size_t strict_trips = count_tamper(s, TamperKind::kGuardTrip);
  const bool ok = trips == 1 && intact && strict_trips == 1 && trip && is_adversary(ActorId{attacker}) &&
                  calls_after == 0 && strict_intact && s.report.calls_after_termination == 0;
  report(6, "guard tripwire", ok,
         fmt("restore_only trips=%zu prologue=%s; strict trips=%zu actor=%u calls_after_trip=%zu prologue=%s", trips,
             intact ? "expected" : "ALTERED", strict_trips, attacker, calls_after,
             strict_intact ? "expected" : "ALTERED"));
}

void criterion_7() {
  const RunResult r = run_scenario(scenario("B0"));
  const char* techniques[] = {"POLLING", "OS_HOOK", "MSG_QUEUE", "CLIPBOARD", "FORM_GRAB"};
  bool ok = r.report.baseline_fidelity;
  std::string detail;
  for (const char* t : techniques) {
    const auto it = r.report.channels.find(t);
    const bool match = it != r.report.channels.end() && !it->second.truth.empty() &&
                       it->second.observed == it->second.truth;
    ok &= match;
    detail += fmt("%s=%s ", t, match ? "match" : "MISMATCH");
  }
  report(7, "B0 baseline fidelity", ok, detail);
}

void criterion_8() {
  bool ok = true;
  std::string detail;
  for (const auto& path : list_scenarios(default_scenario_dir())) {
    const ScenarioConfig cfg = load_scenario(path);
    const RunResult a = run_scenario(cfg);
    const RunResult b = run_scenario(cfg);
    const bool same = report_to_json(a.report) == report_to_json(b.report) && a.report.digest == b.report.digest &&
                      a.log.to_jsonl() == b.log.to_jsonl();
    ok &= same;
    detail += cfg.name + (same ? "=same " : "=DIFFERENT ");
  }
  report(8, "determinism", ok, detail);
}

double gaks_detour_cost(const RunResult& r) {
  std::uint64_t units = 0, calls = 0;
  for (const auto& e : r.log.entries())
    if (e.kind == EventKind::kApiCall && is_adversary(e.actor) && e.name == "GetAsyncKeyState" && (e.aux & 1)) {
      units += static_cast<std::uint64_t>(e.value) + 1;
      ++calls;
    }
  return calls ? static_cast<double>(units) / calls : 0.0;
}

void criterion_9() {
  const ScenarioConfig w1 = scenario("W1");
  std::vector<double> decoy;
  const std::string alphabet = "qwertyuiopasdfghjklzxcvbnm0123456789";
  for (std::size_t len : {4, 8, 16, 32}) {
    ScenarioConfig cfg = w1;
    cfg.expect.clear();
    cfg.duration = 200;
    cfg.user_script.keystrokes = keystrokes_for_text(alphabet.substr(0, len), 10, 4);
    decoy.push_back(gaks_detour_cost(run_scenario(cfg)));
  }
  const bool constant = decoy.front() > 0 && std::all_of(decoy.begin(), decoy.end(), [&](double d) {
                          return d == decoy.front();
                        });

  const ScenarioConfig w2 = scenario("W2");
  std::vector<double> perturb;
  for (double ratio : {0.0, 0.2, 0.5, 1.0}) {
    ScenarioConfig cfg = w2;
    cfg.expect.clear();
    cfg.policy.masking_ratio = ratio;
    const RunResult r = run_scenario(cfg);
    perturb.push_back(r.report.detour_per_call_overhead);
  }
  const bool monotone = std::is_sorted(perturb.begin(), perturb.end()) && perturb.back() > perturb.front();

  report(9, "overhead proxy", constant && monotone,
         fmt("decoy units/call by length 4/8/16/32 = %.4f/%.4f/%.4f/%.4f; "
             "perturbation units/call by ratio 0/0.2/0.5/1 = %.4f/%.4f/%.4f/%.4f",
             decoy[0], decoy[1], decoy[2], decoy[3], perturb[0], perturb[1], perturb[2], perturb[3]));
}

void criterion_10() {
  bool ok = true;
  std::string detail;
  for (const auto& path : list_scenarios(default_scenario_dir())) {
    const RunResult r = run_scenario(load_scenario(path));
    const auto& m = r.report;
    const bool balanced =
        m.conservation_holds && m.tamper_events.size() == m.landed_tamper_writes + m.hooked_clone_loads + m.guard_trip_faults;
    const VerifyResult v = verify_report(report_to_json(m), r.log.to_jsonl());
    ok &= balanced && v.ok;
    detail += fmt("%s %zu=%llu+%llu+%llu%s ", m.scenario.c_str(), m.tamper_events.size(),
                  static_cast<unsigned long long>(m.landed_tamper_writes),
                  static_cast<unsigned long long>(m.hooked_clone_loads),
                  static_cast<unsigned long long>(m.guard_trip_faults), v.ok ? "" : " VERIFY-FAILED");
  }
  report(10, "conservation and verify", ok, detail);
}

}  // namespace

int main() {
  const std::function<void()> criteria[] = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  int id = 0;
  for (const auto& c : criteria) {
    ++id;
    try {
      c();
    } catch (const std::exception& e) {
      report(id, "criterion", false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - g_failures, std::size(criteria));
  return g_failures == 0 ? 0 : 1;
}
