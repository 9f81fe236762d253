#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hookdecoy/adversary.hpp"
#include "hookdecoy/apisim.hpp"
#include "hookdecoy/deception.hpp"
#include "hookdecoy/integrity.hpp"
#include "hookdecoy/keyboard.hpp"

namespace hookdecoy {

/// One bound a scenario asserts on a report metric.
struct Expectation {
  std::string metric;
  std::string op;  // "eq", "le", "lt", "ge", "gt"
  double value = 0.0;
};

struct DefenseConfig {
  bool enabled = true;
  Tick activation_tick = 0;
  std::vector<std::string> hooks = {"GetAsyncKeyState", "GetKeyboardState", "PeekMessage",
                                    "GetMessage",       "SetWindowsHookEx", "GetClipboardData",
                                    "HttpSendRequest",  "InternetWriteFile", "WSASend",
                                    "IsDebuggerPresent", "GetTickCount"};
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string description;
  std::uint64_t seed = 1;
  Tick duration = 100;
  bool obfuscate = true;
  DefenseConfig defense;
  UserScript user_script;
  AdversaryConfig adversary;
  DeceptionPolicy policy;
  IntegrityConfig integrity;
  Environment environment;
  std::string output_dir;
  std::vector<std::string> formats = {"json", "csv", "text"};
  std::vector<Expectation> expect;

  /// Throws kConfig when any part is inconsistent.
  void validate() const;
  /// Replaces the scenario seed and every seed derived from it.
  void reseed(std::uint64_t s);
};

/// Parses the JSON scenario format. base_dir resolves a relative
/// "user_script_file".
ScenarioConfig parse_scenario(std::string_view json_text, const std::string& base_dir = ".");
ScenarioConfig load_scenario(const std::string& path);

/// Directory of the scenarios shipped with the source tree.
std::string default_scenario_dir();
/// Scenario files in dir, sorted by file name.
std::vector<std::string> list_scenarios(const std::string& dir);

}  // namespace hookdecoy
