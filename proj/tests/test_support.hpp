#pragma once

#include <string>

#include "hookdecoy/harness.hpp"
#include "hookdecoy/scenario.hpp"

namespace testsupport {

/// A small scenario: one window, one typed string, one capture technique.
inline hookdecoy::ScenarioConfig typing_scenario(const std::string& text,
                                                 hookdecoy::Technique t = hookdecoy::Technique::kPolling,
                                                 hookdecoy::Tick start = 10, hookdecoy::Tick interval = 4) {
  using namespace hookdecoy;
  ScenarioConfig cfg;
  cfg.name = "unit";
  cfg.seed = 5;
  cfg.duration = start + interval * (text.size() + 2) + 10;
  cfg.user_script.keystrokes = keystrokes_for_text(text, start, interval);
  cfg.user_script.foreground_window = {{0, "Notepad - notes.txt"}};
  cfg.adversary.techniques = {t};
  cfg.policy.rng_seed = cfg.seed;
  return cfg;
}

inline std::string keylog_text(const hookdecoy::RunResult& r) {
  std::string s;
  for (const auto& e : r.keylog.entries) s += e.text;
  return s;
}

}  // namespace testsupport
