#include "hookdecoy/metrics.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hookdecoy/adversary.hpp"
#include "hookdecoy/integrity.hpp"
#include "hookdecoy/keyboard.hpp"
#include "hookdecoy/loader.hpp"

namespace hookdecoy {

using nlohmann::json;

namespace {

bool adversarial(ActorId a) { return is_adversary(a); }

struct HookedPrologue {
  std::string module;
  std::string export_name;
};

bool overlaps(Address a, std::uint32_t alen, Address b, std::uint32_t blen) {
  return a < b + blen && b < a + alen;
}

std::string sensitive_values(const std::string& body, const std::vector<std::string>& sensitive) {
  std::string out;
  for (const auto& [k, v] : parse_form(body))
    if (std::find(sensitive.begin(), sensitive.end(), k) != sensitive.end()) out += v;
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void dump_canonical(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += inner + json(k).dump() + ": ";
        dump_canonical(v, out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        dump_canonical(j[i], out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

json to_json(const ScenarioReport& r) {
  json j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["duration"] = r.duration;
  j["defense_active"] = r.defense_active;
  j["mode"] = r.mode;
  j["masking_ratio"] = r.masking_ratio;
  json ch = json::object();
  for (const auto& [name, c] : r.channels)
    ch[name] = {{"observed", c.observed}, {"truth", c.truth}, {"chars", c.chars}, {"leaks", c.leaks}};
  j["channels"] = ch;
  j["keylog_entries"] = r.keylog_entries;
  j["keylog_chars"] = r.keylog_chars;
  j["true_leak_count"] = r.true_leak_count;
  j["decoy_purity"] = r.decoy_purity;
  j["post_restore_purity"] = r.post_restore_purity;
  j["titles_correct"] = r.titles_correct;
  j["baseline_fidelity"] = r.baseline_fidelity;
  j["units"] = r.units;
  j["modified_units"] = r.modified_units;
  j["modified_calls"] = r.modified_calls;
  j["expected_modified"] = r.expected_modified;
  j["modified_call_fraction"] = r.modified_call_fraction;
  j["sweep_count"] = r.sweep_count;
  j["api_call_counts"] = r.api_call_counts;
  j["api_calls"] = r.api_calls;
  j["adversary_calls"] = r.adversary_calls;
  j["detoured_calls"] = r.detoured_calls;
  j["interpreted_instructions"] = r.interpreted_instructions;
  j["handler_invocations"] = r.handler_invocations;
  j["perturbation_ops"] = r.perturbation_ops;
  j["per_call_overhead"] = r.per_call_overhead;
  j["detour_per_call_overhead"] = r.detour_per_call_overhead;
  j["overhead_relative"] = r.overhead_relative;
  j["adversary_warnings"] = r.adversary_warnings;
  j["scenario_warnings"] = r.scenario_warnings;
  json te = json::array();
  for (const auto& t : r.tamper_events)
    te.push_back({{"tick", t.tick},
                  {"kind", t.kind},
                  {"action", t.action},
                  {"module", t.module},
                  {"export", t.export_name},
                  {"latency", t.latency}});
  j["tamper_events"] = te;
  j["tamper_event_count"] = r.tamper_events.size();
  j["prologue_mismatches"] = r.prologue_mismatches;
  j["guard_trips"] = r.guard_trips;
  j["clone_rehooks"] = r.clone_rehooks;
  j["max_restore_latency"] = r.max_restore_latency;
  j["terminated_threads"] = r.terminated_threads;
  j["calls_after_termination"] = r.calls_after_termination;
  json at = json::array();
  for (const auto& a : r.attacks)
    at.push_back({{"tick", a.tick},
                  {"name", a.name},
                  {"actor", a.actor},
                  {"tamper_responses", a.tamper_responses},
                  {"warnings", a.warnings}});
  j["attacks"] = at;
  j["clone_loads"] = r.clone_loads;
  j["clone_hook_coverage"] = r.clone_hook_coverage;
  j["clone_load_precedes_call"] = r.clone_load_precedes_call;
  j["conservation"] = {{"landed_tamper_writes", r.landed_tamper_writes},
                       {"hooked_clone_loads", r.hooked_clone_loads},
                       {"guard_trip_faults", r.guard_trip_faults},
                       {"tamper_events", r.tamper_events.size()}};
  j["conservation_holds"] = r.conservation_holds;
  j["event_count"] = r.event_count;
  j["digest"] = r.digest;
  return j;
}

}  // namespace

ScenarioReport compute_metrics(const EventLog& log) {
  ScenarioReport r;
  const auto& ev = log.entries();
  r.event_count = ev.size();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, log.digest());
  r.digest = hex;

  // Clone ranges are needed before the main pass to spot calls into a clone
  // that appear ahead of its load.
  struct Range {
    Address base;
    std::uint32_t len;
    std::size_t load_index;
  };
  std::vector<Range> clone_ranges;
  for (std::size_t i = 0; i < ev.size(); ++i)
    if (ev[i].kind == EventKind::kLoad && ev[i].value == static_cast<std::int64_t>(ModuleOrigin::kClone))
      clone_ranges.push_back({ev[i].addr, ev[i].len, i});

  std::string typed;
  std::string clipboard_truth;
  std::vector<std::pair<Tick, std::string>> forms;
  std::vector<std::string> sensitive = {"username", "password"};
  std::vector<std::pair<Tick, std::string>> windows;
  std::vector<std::string> techniques;
  bool clone_rehook = false;

  std::map<Address, HookedPrologue> hooked;                   // active hooked prologues
  std::map<std::string, std::set<std::string>> hooked_by_module;
  std::map<std::string, std::string> system_of_template;  // template -> first system load name
  std::vector<std::pair<std::string, std::string>> clones;  // (clone name, template)
  std::set<Address> dirty;                                 // prologues with an unrepaired landed write
  std::set<std::uint32_t> terminated_actors;
  std::uint64_t detoured_instructions = 0;

  struct KeylogPiece {
    std::string channel;
    Tick start;
    std::string text;
    std::string title;
  };
  std::vector<KeylogPiece> pieces;
  std::optional<std::size_t> first_clone_call;

  for (std::size_t i = 0; i < ev.size(); ++i) {
    const Event& e = ev[i];
    switch (e.kind) {
      case EventKind::kScenario:
        r.scenario = e.name;
        r.seed = static_cast<std::uint64_t>(e.value);
        r.duration = e.len;
        break;
      case EventKind::kDefenseActive:
        r.defense_active = true;
        r.mode = e.name;
        r.masking_ratio = std::stod(e.text);
        clone_rehook = (e.aux & 2) != 0;
        break;
      case EventKind::kTruth:
        if (e.name == "KEYS") typed = e.text;
        else if (e.name == "CLIPBOARD") clipboard_truth += e.text;
        else if (e.name == "FORM") forms.emplace_back(static_cast<Tick>(e.value), e.text);
        else if (e.name == "SENSITIVE_FIELDS") sensitive = split_csv(e.text);
        else if (e.name == "WINDOW") windows.emplace_back(static_cast<Tick>(e.value), e.text);
        break;
      case EventKind::kThreadStart:
        techniques.push_back(e.name);
        break;
      case EventKind::kLoad:
        if (e.value == static_cast<std::int64_t>(ModuleOrigin::kSystem)) {
          system_of_template.try_emplace(e.text, e.name);
        } else {
          ++r.clone_loads;
          clones.emplace_back(e.name, e.text);
          auto sys = system_of_template.find(e.text);
          if (clone_rehook && sys != system_of_template.end() && !hooked_by_module[sys->second].empty())
            ++r.hooked_clone_loads;
        }
        break;
      case EventKind::kHookInstall:
        hooked[e.addr] = {e.text, e.name};
        hooked_by_module[e.text].insert(e.name);
        break;
      case EventKind::kHookRemove:
        hooked.erase(e.addr);
        hooked_by_module[e.text].erase(e.name);
        dirty.erase(e.addr);
        break;
      case EventKind::kWrite: {
        if (e.value != static_cast<std::int64_t>(WriteOutcome::kLanded)) break;
        for (const auto& [target, p] : hooked) {
          if (!overlaps(e.addr, e.len, target, kPrologueLen)) continue;
          if (e.actor == kDefenseActor) {
            dirty.erase(target);
          } else if (adversarial(e.actor) && dirty.insert(target).second) {
            ++r.landed_tamper_writes;
          }
        }
        break;
      }
      case EventKind::kFault:
        if (e.value == static_cast<std::int64_t>(FaultKind::kGuardViolation) && adversarial(e.actor) &&
            e.aux != static_cast<std::int64_t>(Access::kExecute)) {
          for (const auto& [target, p] : hooked)
            if (overlaps(e.addr, 1, target, kPrologueLen)) {
              ++r.guard_trip_faults;
              break;
            }
        }
        break;
      case EventKind::kApiCall: {
        ++r.api_calls;
        ++r.api_call_counts[e.name];
        if (!adversarial(e.actor)) break;
        ++r.adversary_calls;
        r.interpreted_instructions += static_cast<std::uint64_t>(e.value);
        if (e.aux & 1) {
          ++r.detoured_calls;
          ++r.handler_invocations;
          detoured_instructions += static_cast<std::uint64_t>(e.value);
        }
        if (e.aux & 2) ++r.modified_calls;
        if (e.name == "GetAsyncKeyState" && e.len == kVkFirst) ++r.sweep_count;
        if (terminated_actors.contains(to_underlying(e.actor))) ++r.calls_after_termination;
        for (const auto& cr : clone_ranges)
          if (e.addr >= cr.base && e.addr - cr.base < cr.len) {
            if (!first_clone_call) first_clone_call = i;
            if (cr.load_index > i) r.clone_load_precedes_call = false;
          }
        break;
      }
      case EventKind::kDecision:
        ++r.units;
        if (e.value) {
          ++r.modified_units;
          ++r.perturbation_ops;
        }
        break;
      case EventKind::kTamper: {
        TamperRow t;
        t.tick = e.tick;
        t.kind = to_string(static_cast<TamperKind>(e.value));
        t.action = to_string(static_cast<TamperAction>(e.aux));
        t.module = e.text;
        t.export_name = e.name;
        t.latency = e.len;
        r.max_restore_latency = std::max(r.max_restore_latency, t.latency);
        switch (static_cast<TamperKind>(e.value)) {
          case TamperKind::kPrologueMismatch: ++r.prologue_mismatches; break;
          case TamperKind::kGuardTrip: ++r.guard_trips; break;
          case TamperKind::kCloneLoad: ++r.clone_rehooks; break;
        }
        if (static_cast<TamperAction>(e.aux) == TamperAction::kTerminatedThread && !e.note.empty())
          terminated_actors.insert(static_cast<std::uint32_t>(std::stoul(e.note)));
        r.tamper_events.push_back(std::move(t));
        if (!r.attacks.empty()) ++r.attacks.back().tamper_responses;
        break;
      }
      case EventKind::kWarning:
        ++r.adversary_warnings;
        if (!r.attacks.empty()) ++r.attacks.back().warnings;
        break;
      case EventKind::kScenarioWarning:
        ++r.scenario_warnings;
        break;
      case EventKind::kTerminate:
        ++r.terminated_threads;
        break;
      case EventKind::kAttack:
        r.attacks.push_back({e.tick, e.name, to_underlying(e.actor), 0, 0});
        break;
      case EventKind::kKeylog:
        ++r.keylog_entries;
        pieces.push_back({e.name, static_cast<Tick>(e.value), e.text, e.note});
        break;
      case EventKind::kNetSend:
        if (adversarial(e.actor))
          pieces.push_back({to_string(Technique::kFormGrab), e.tick, sensitive_values(e.text, sensitive), ""});
        break;
      default:
        break;
    }
  }

  // Restoration point: the last successful repair or re-hook.
  std::optional<Tick> restored_at;
  for (const auto& t : r.tamper_events)
    if (t.action != to_string(TamperAction::kTerminatedThread)) restored_at = t.tick;

  std::string form_truth;
  for (const auto& [tick, body] : forms) form_truth += sensitive_values(body, sensitive);
  const auto truth_for = [&](const std::string& channel) -> std::string {
    if (channel == to_string(Technique::kClipboard)) return clipboard_truth;
    if (channel == to_string(Technique::kFormGrab)) return form_truth;
    return typed;
  };
  const auto title_at = [&](Tick t) {
    std::string title;
    for (const auto& [tick, w] : windows)
      if (tick <= t) title = w;
    return title;
  };

  for (const auto& tech : techniques) r.channels[tech].truth = truth_for(tech);
  std::uint64_t post_chars = 0, post_leaks = 0;
  for (const auto& p : pieces) {
    ChannelStats& c = r.channels[p.channel];
    if (c.truth.empty()) c.truth = truth_for(p.channel);
    const bool post = !restored_at || p.start >= *restored_at;
    for (char ch : p.text) {
      const std::size_t pos = c.observed.size();
      const bool leak = pos < c.truth.size() && c.truth[pos] == ch;
      c.observed += ch;
      ++c.chars;
      if (leak) ++c.leaks;
      if (post) {
        ++post_chars;
        if (leak) ++post_leaks;
      }
    }
    if (p.channel != to_string(Technique::kFormGrab) && p.title != title_at(p.start))
      r.titles_correct = false;
  }
  for (const auto& [name, c] : r.channels) {
    r.keylog_chars += c.chars;
    r.true_leak_count += c.leaks;
  }
  r.decoy_purity = r.keylog_chars ? 1.0 - static_cast<double>(r.true_leak_count) / r.keylog_chars : 1.0;
  r.post_restore_purity = post_chars ? 1.0 - static_cast<double>(post_leaks) / post_chars : 1.0;
  r.baseline_fidelity = !r.channels.empty() &&
                        std::all_of(r.channels.begin(), r.channels.end(),
                                    [](const auto& kv) { return kv.second.observed == kv.second.truth; });

  r.expected_modified = static_cast<std::uint64_t>(std::llround(r.masking_ratio * r.units));
  r.modified_call_fraction = r.units ? static_cast<double>(r.modified_units) / r.units : 0.0;
  const double overhead_units =
      static_cast<double>(r.interpreted_instructions + r.handler_invocations + r.perturbation_ops);
  r.per_call_overhead = r.adversary_calls ? overhead_units / r.adversary_calls : 0.0;
  r.detour_per_call_overhead =
      r.detoured_calls
          ? static_cast<double>(detoured_instructions + r.handler_invocations + r.perturbation_ops) /
                r.detoured_calls
          : 0.0;
  r.overhead_relative = r.per_call_overhead / kBaselineCallCost;

  for (const auto& [clone, tmpl] : clones) {
    auto sys = system_of_template.find(tmpl);
    if (sys == system_of_template.end()) continue;
    const auto& orig = hooked_by_module[sys->second];
    if (orig.empty()) continue;
    const auto& mine = hooked_by_module[clone];
    std::size_t covered = 0;
    for (const auto& name : orig) covered += mine.contains(name) ? 1 : 0;
    r.clone_hook_coverage = std::min(r.clone_hook_coverage, static_cast<double>(covered) / orig.size());
  }

  r.conservation_holds =
      r.tamper_events.size() == r.landed_tamper_writes + r.hooked_clone_loads + r.guard_trip_faults;
  return r;
}

std::string report_to_json(const ScenarioReport& r) {
  std::string out;
  dump_canonical(to_json(r), out, 0);
  out += '\n';
  return out;
}

std::string report_csv_header() {
  return "scenario,seed,duration,mode,masking_ratio,keylog_chars,true_leak_count,decoy_purity,"
         "post_restore_purity,titles_correct,units,modified_units,expected_modified,"
         "modified_call_fraction,sweep_count,adversary_calls,per_call_overhead,overhead_relative,"
         "adversary_warnings,tamper_events,guard_trips,clone_loads,max_restore_latency,"
         "clone_hook_coverage,conservation_holds,digest";
}

std::string report_csv_row(const ScenarioReport& r) {
  std::ostringstream o;
  o << r.scenario << ',' << r.seed << ',' << r.duration << ',' << r.mode << ','
    << format_double(r.masking_ratio) << ',' << r.keylog_chars << ',' << r.true_leak_count << ','
    << format_double(r.decoy_purity) << ',' << format_double(r.post_restore_purity) << ','
    << (r.titles_correct ? 1 : 0) << ',' << r.units << ',' << r.modified_units << ','
    << r.expected_modified << ',' << format_double(r.modified_call_fraction) << ',' << r.sweep_count
    << ',' << r.adversary_calls << ',' << format_double(r.per_call_overhead) << ','
    << format_double(r.overhead_relative) << ',' << r.adversary_warnings << ','
    << r.tamper_events.size() << ',' << r.guard_trips << ',' << r.clone_loads << ','
    << r.max_restore_latency << ',' << format_double(r.clone_hook_coverage) << ','
    << (r.conservation_holds ? 1 : 0) << ',' << r.digest;
  return o.str();
}

std::string report_to_text(const ScenarioReport& r) {
  std::ostringstream o;
  const auto printable = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '\t') out += "[TAB]";
      else if (c == '\n') out += "[ENTER]";
      else out += c;
    }
    return out;
  };
  o << "scenario " << r.scenario << " (seed " << r.seed << ", " << r.duration << " ticks)\n";
  o << "defense: " << (r.defense_active ? r.mode : std::string("off"));
  if (r.defense_active && r.mode == "INPUT_PERTURBATION") o << " ratio " << format_double(r.masking_ratio);
  o << "\n\n";
  for (const auto& [name, c] : r.channels)
    o << "channel " << name << ": logged \"" << printable(c.observed) << "\", truth \""
      << printable(c.truth) << "\", " << c.leaks << "/" << c.chars << " true chars\n";
  o << "decoy purity " << format_double(r.decoy_purity) << ", post-restore purity "
    << format_double(r.post_restore_purity) << ", true leaks " << r.true_leak_count
    << ", titles " << (r.titles_correct ? "correct" : "WRONG") << "\n";
  if (r.units)
    o << "masking: " << r.modified_units << " of " << r.units << " units modified (expected "
      << r.expected_modified << "), " << r.sweep_count << " polling sweeps\n";
  o << "calls: " << r.api_calls << " total, " << r.adversary_calls << " adversary, "
    << r.detoured_calls << " detoured; overhead " << format_double(r.per_call_overhead)
    << " units/call (" << format_double(r.overhead_relative) << "x baseline)\n";
  o << "adversary warnings: " << r.adversary_warnings << "\n";
  for (const auto& a : r.attacks)
    o << "attack " << a.name << " at tick " << a.tick << " by actor " << a.actor << ": "
      << a.tamper_responses << " tamper response(s), " << a.warnings << " warning(s)\n";
  o << "tamper events: " << r.tamper_events.size() << " (" << r.prologue_mismatches << " mismatch, "
    << r.guard_trips << " guard trip, " << r.clone_rehooks << " clone), max restore latency "
    << r.max_restore_latency << "\n";
  for (const auto& t : r.tamper_events)
    o << "  tick " << t.tick << " " << t.kind << " " << t.module
      << (t.export_name.empty() ? "" : "!" + t.export_name) << " -> " << t.action << " (latency "
      << t.latency << ")\n";
  if (r.clone_loads)
    o << "clones: " << r.clone_loads << " loaded, hook coverage " << format_double(r.clone_hook_coverage)
      << ", load precedes first call: " << (r.clone_load_precedes_call ? "yes" : "NO") << "\n";
  o << "conservation: " << r.tamper_events.size() << " = " << r.landed_tamper_writes << " writes + "
    << r.hooked_clone_loads << " clone loads + " << r.guard_trip_faults << " guard trips: "
    << (r.conservation_holds ? "holds" : "VIOLATED") << "\n";
  o << "events " << r.event_count << ", digest " << r.digest << "\n";
  return o.str();
}

std::optional<double> metric_value(const ScenarioReport& r, const std::string& name) {
  const json j = to_json(r);
  auto it = j.find(name);
  if (it == j.end()) return std::nullopt;
  if (it->is_boolean()) return it->get<bool>() ? 1.0 : 0.0;
  if (it->is_number()) return it->get<double>();
  return std::nullopt;
}

std::vector<ExpectationResult> check_expectations(const ScenarioReport& r,
                                                  const std::vector<Expectation>& expect) {
  std::vector<ExpectationResult> out;
  for (const auto& e : expect) {
    ExpectationResult res{e, metric_value(r, e.metric), false};
    if (res.actual) {
      const double a = *res.actual;
      if (e.op == "eq") res.passed = std::fabs(a - e.value) < 1e-9;
      else if (e.op == "le") res.passed = a <= e.value;
      else if (e.op == "lt") res.passed = a < e.value;
      else if (e.op == "ge") res.passed = a >= e.value;
      else if (e.op == "gt") res.passed = a > e.value;
    }
    out.push_back(res);
  }
  return out;
}

}  // namespace hookdecoy
