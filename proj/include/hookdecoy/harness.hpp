#pragma once

#include <string>
#include <vector>

#include "hookdecoy/adversary.hpp"
#include "hookdecoy/metrics.hpp"
#include "hookdecoy/scenario.hpp"
#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

/// Prologue state of one installed hook when the run ended.
struct FinalHookState {
  std::string module;
  std::string export_name;
  bool intact = false;  // live bytes equal the expected layout
};

struct RunResult {
  ScenarioReport report;
  EventLog log;
  KeylogOutput keylog;
  std::vector<ExpectationResult> expectations;
  std::vector<FinalHookState> final_hooks;

  bool passed() const;
};

/// Builds a fresh process, runs the scenario for cfg.duration ticks and
/// computes the report from the resulting event log.
RunResult run_scenario(const ScenarioConfig& cfg);

/// Writes events.jsonl, keylog.log and the report formats listed in
/// cfg.formats into dir. Returns the paths written.
std::vector<std::string> write_outputs(const RunResult& result, const ScenarioConfig& cfg,
                                       const std::string& dir);

struct VerifyResult {
  bool ok = false;
  std::string message;
};

/// Recomputes the report from an event log and compares it byte for byte
/// with a previously written report.json.
VerifyResult verify_report(const std::string& report_json, const std::string& events_jsonl);
VerifyResult verify_files(const std::string& report_path, const std::string& events_path);

}  // namespace hookdecoy
