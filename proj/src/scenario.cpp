#include "hookdecoy/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#ifndef HOOKDECOY_SCENARIO_DIR
#define HOOKDECOY_SCENARIO_DIR "scenarios"
#endif

namespace hookdecoy {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw SimError(ErrorCode::kConfig, msg); }

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) bad(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.contains(k)) bad("unknown key '" + k + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      bad(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

template <typename E, typename F>
E parse_enum(const json& v, F from_string, const char* what) {
  if (!v.is_string()) bad(std::string(what) + " must be a string");
  const auto e = from_string(v.get<std::string>());
  if (!e) bad(std::string("unknown ") + what + " '" + v.get<std::string>() + "'");
  return *e;
}

Bytes parse_hex_bytes(const json& v) {
  Bytes out;
  for (const auto& b : v) {
    if (b.is_number_unsigned() && b.get<std::uint64_t>() <= 0xFF) {
      out.push_back(static_cast<Byte>(b.get<std::uint64_t>()));
    } else if (b.is_string()) {
      out.push_back(static_cast<Byte>(std::stoul(b.get<std::string>(), nullptr, 16)));
    } else {
      bad("scan pattern bytes must be 0-255 or hex strings");
    }
  }
  return out;
}

UserScript parse_user_script(const json& j) {
  check_keys(j, {"typing", "keys", "clipboard", "form_posts", "windows"}, "user_script");
  UserScript s;
  std::vector<KeyEvent> keys;
  if (auto it = j.find("typing"); it != j.end()) {
    for (const auto& seg : *it) {
      check_keys(seg, {"text", "start", "interval"}, "typing segment");
      std::string text;
      Tick start = 0, interval = 4;
      read(seg, "text", text);
      read(seg, "start", start);
      read(seg, "interval", interval);
      const auto ks = keystrokes_for_text(text, start, interval);
      keys.insert(keys.end(), ks.begin(), ks.end());
    }
  }
  if (auto it = j.find("keys"); it != j.end()) {
    for (const auto& k : *it) {
      check_keys(k, {"tick", "vk", "kind", "ch"}, "key event");
      KeyEvent e;
      read(k, "tick", e.tick);
      read(k, "vk", e.vk);
      std::string kind = "down";
      read(k, "kind", kind);
      if (kind != "down" && kind != "up") bad("key kind must be down or up");
      e.kind = kind == "down" ? KeyEventKind::kDown : KeyEventKind::kUp;
      if (auto ch = k.find("ch"); ch != k.end()) {
        const auto str = ch->get<std::string>();
        if (str.size() != 1) bad("key ch must be a single character");
        e.ch = str[0];
      }
      keys.push_back(e);
    }
  }
  std::stable_sort(keys.begin(), keys.end(),
                   [](const KeyEvent& a, const KeyEvent& b) { return a.tick < b.tick; });
  s.keystrokes = std::move(keys);
  if (auto it = j.find("clipboard"); it != j.end())
    for (const auto& c : *it) {
      check_keys(c, {"tick", "text"}, "clipboard set");
      ClipboardSet cs;
      read(c, "tick", cs.tick);
      read(c, "text", cs.text);
      s.clipboard_sets.push_back(cs);
    }
  if (auto it = j.find("form_posts"); it != j.end())
    for (const auto& f : *it) {
      check_keys(f, {"tick", "url", "body"}, "form post");
      FormPost p;
      read(f, "tick", p.tick);
      read(f, "url", p.url);
      read(f, "body", p.body);
      s.form_posts.push_back(p);
    }
  if (auto it = j.find("windows"); it != j.end())
    for (const auto& w : *it) {
      check_keys(w, {"tick", "title"}, "window change");
      WindowChange wc;
      read(w, "tick", wc.tick);
      read(w, "title", wc.title);
      s.foreground_window.push_back(wc);
    }
  return s;
}

AdversaryConfig parse_adversary(const json& j) {
  check_keys(j,
             {"techniques", "attacks", "poll_period", "start_tick", "attack_trigger_tick",
              "attack_targets", "scan_targets", "scan_patterns", "restore_source", "evasion_checks",
              "periodic_rescan"},
             "adversary");
  AdversaryConfig a;
  if (auto it = j.find("techniques"); it != j.end()) {
    a.techniques.clear();
    for (const auto& t : *it) a.techniques.push_back(parse_enum<Technique>(t, technique_from_string, "technique"));
  }
  if (auto it = j.find("attacks"); it != j.end())
    for (const auto& t : *it) a.attacks.push_back(parse_enum<Attack>(t, attack_from_string, "attack"));
  read(j, "poll_period", a.poll_period);
  read(j, "start_tick", a.start_tick);
  read(j, "attack_trigger_tick", a.attack_trigger_tick);
  read(j, "attack_targets", a.attack_targets);
  read(j, "scan_targets", a.scan_targets);
  if (auto it = j.find("scan_patterns"); it != j.end()) {
    a.scan_patterns.clear();
    for (const auto& p : *it) {
      check_keys(p, {"bytes", "offset"}, "scan pattern");
      ScanPattern sp;
      sp.bytes = parse_hex_bytes(p.at("bytes"));
      if (auto off = p.find("offset"); off != p.end() && !off->is_null()) sp.offset = off->get<std::uint32_t>();
      a.scan_patterns.push_back(sp);
    }
  }
  if (auto it = j.find("restore_source"); it != j.end())
    a.restore_source = parse_enum<RestoreSource>(*it, restore_source_from_string, "restore_source");
  read(j, "evasion_checks", a.evasion_checks);
  read(j, "periodic_rescan", a.periodic_rescan);
  return a;
}

DeceptionPolicy parse_policy(const json& j) {
  check_keys(j,
             {"mode", "decoy_text", "decoy_clipboard", "decoy_fields", "sensitive_fields",
              "masking_ratio", "perturb_ops", "rng_seed", "rearm_gap", "hook_registration",
              "spoof_environment", "decoy_consistent_modifiers"},
             "policy");
  DeceptionPolicy p;
  if (auto it = j.find("mode"); it != j.end())
    p.mode = parse_enum<DeceptionMode>(*it, deception_mode_from_string, "deception mode");
  read(j, "decoy_text", p.decoy_text);
  read(j, "decoy_clipboard", p.decoy_clipboard);
  read(j, "decoy_fields", p.decoy_fields);
  read(j, "sensitive_fields", p.sensitive_fields);
  read(j, "masking_ratio", p.masking_ratio);
  if (auto it = j.find("perturb_ops"); it != j.end()) {
    p.perturb_ops.clear();
    for (const auto& o : *it) p.perturb_ops.push_back(parse_enum<PerturbOp>(o, perturb_op_from_string, "perturb op"));
  }
  read(j, "rng_seed", p.rng_seed);
  read(j, "rearm_gap", p.rearm_gap);
  if (auto it = j.find("hook_registration"); it != j.end())
    p.hook_registration = parse_enum<HookRegistrationPolicy>(*it, hook_policy_from_string, "hook_registration");
  read(j, "spoof_environment", p.spoof_environment);
  read(j, "decoy_consistent_modifiers", p.decoy_consistent_modifiers);
  return p;
}

IntegrityConfig parse_integrity(const json& j) {
  check_keys(j, {"watchdog", "watchdog_period", "guard_mode", "clone_rehook", "scan_scope"}, "integrity");
  IntegrityConfig c;
  read(j, "watchdog", c.watchdog);
  read(j, "watchdog_period", c.watchdog_period);
  if (auto it = j.find("guard_mode"); it != j.end())
    c.guard_mode = parse_enum<GuardMode>(*it, guard_mode_from_string, "guard_mode");
  read(j, "clone_rehook", c.clone_rehook);
  read(j, "scan_scope", c.scan_scope);
  return c;
}

}  // namespace

void ScenarioConfig::reseed(std::uint64_t s) {
  seed = s;
  policy.rng_seed = s;
  environment.seed = s;
}

void ScenarioConfig::validate() const {
  if (duration < 1) bad("duration must be >= 1");
  if (name.empty()) bad("scenario name must not be empty");
  user_script.validate();
  adversary.validate();
  integrity.validate();
  if (defense.enabled) {
    policy.validate();
    for (const auto& h : defense.hooks)
      if (!is_known_api(h)) bad("unknown hooked API '" + h + "'");
  }
  for (const auto& f : formats)
    if (f != "json" && f != "csv" && f != "text") bad("unknown output format '" + f + "'");
  for (const auto& e : expect)
    if (e.op != "eq" && e.op != "le" && e.op != "lt" && e.op != "ge" && e.op != "gt")
      bad("unknown expectation operator '" + e.op + "'");
}

ScenarioConfig parse_scenario(std::string_view json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    bad(std::string("scenario is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"name", "description", "seed", "duration", "obfuscate", "defense", "user_script",
              "user_script_file", "adversary", "policy", "integrity", "environment", "outputs",
              "expect"},
             "scenario");
  ScenarioConfig c;
  read(j, "name", c.name);
  read(j, "description", c.description);
  read(j, "seed", c.seed);
  read(j, "duration", c.duration);
  read(j, "obfuscate", c.obfuscate);
  c.policy.rng_seed = c.seed;
  if (auto it = j.find("defense"); it != j.end()) {
    check_keys(*it, {"enabled", "activation_tick", "hooks"}, "defense");
    read(*it, "enabled", c.defense.enabled);
    read(*it, "activation_tick", c.defense.activation_tick);
    read(*it, "hooks", c.defense.hooks);
  }
  if (j.contains("user_script") && j.contains("user_script_file"))
    bad("give either user_script or user_script_file, not both");
  if (auto it = j.find("user_script"); it != j.end()) c.user_script = parse_user_script(*it);
  if (auto it = j.find("user_script_file"); it != j.end()) {
    std::filesystem::path p = it->get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    std::ifstream in(p);
    if (!in) bad("cannot open user script " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      c.user_script = parse_user_script(json::parse(ss.str()));
    } catch (const json::parse_error& e) {
      bad("user script is not valid JSON: " + std::string(e.what()));
    }
  }
  if (auto it = j.find("adversary"); it != j.end()) c.adversary = parse_adversary(*it);
  if (auto it = j.find("policy"); it != j.end()) {
    c.policy = parse_policy(*it);
    if (!it->contains("rng_seed")) c.policy.rng_seed = c.seed;
  }
  if (auto it = j.find("integrity"); it != j.end()) c.integrity = parse_integrity(*it);
  if (auto it = j.find("environment"); it != j.end()) {
    check_keys(*it, {"instrumented", "tick_ms", "jitter_ms"}, "environment");
    read(*it, "instrumented", c.environment.instrumented);
    read(*it, "tick_ms", c.environment.tick_ms);
    read(*it, "jitter_ms", c.environment.jitter_ms);
  }
  c.environment.seed = c.seed;
  if (auto it = j.find("outputs"); it != j.end()) {
    check_keys(*it, {"dir", "formats"}, "outputs");
    read(*it, "dir", c.output_dir);
    read(*it, "formats", c.formats);
  }
  if (auto it = j.find("expect"); it != j.end()) {
    if (!it->is_object()) bad("expect must be an object");
    for (const auto& [metric, bounds] : it->items()) {
      if (!bounds.is_object()) bad("expectation for " + metric + " must be an object");
      for (const auto& [op, v] : bounds.items()) {
        if (!v.is_number() && !v.is_boolean()) bad("expectation bound must be a number");
        c.expect.push_back({metric, op, v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0) : v.get<double>()});
      }
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimError(ErrorCode::kIo, "cannot open scenario " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), std::filesystem::path(path).parent_path().string());
}

std::string default_scenario_dir() { return HOOKDECOY_SCENARIO_DIR; }

std::vector<std::string> list_scenarios(const std::string& dir) {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec))
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path().string());
  if (ec) throw SimError(ErrorCode::kIo, "cannot list " + dir + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hookdecoy
