#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hookdecoy/interp.hpp"
#include "hookdecoy/scenario.hpp"
#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

/// Cost of one undetoured call; the defenses-off baseline.
inline constexpr double kBaselineCallCost = kNativeCallSteps;

struct ChannelStats {
  std::string observed;
  std::string truth;
  std::uint64_t chars = 0;
  std::uint64_t leaks = 0;
};

struct TamperRow {
  Tick tick = 0;
  std::string kind;
  std::string action;
  std::string module;
  std::string export_name;
  Tick latency = 0;
};

struct AttackRow {
  Tick tick = 0;
  std::string name;
  std::uint32_t actor = 0;
  std::uint64_t tamper_responses = 0;
  std::uint64_t warnings = 0;
};

/// Everything a run reports. Every field is derived from the event log alone.
struct ScenarioReport {
  std::string scenario;
  std::uint64_t seed = 0;
  Tick duration = 0;
  bool defense_active = false;
  std::string mode = "NONE";
  double masking_ratio = 0.0;

  std::map<std::string, ChannelStats> channels;
  std::uint64_t keylog_entries = 0;
  std::uint64_t keylog_chars = 0;
  std::uint64_t true_leak_count = 0;
  double decoy_purity = 1.0;
  double post_restore_purity = 1.0;
  bool titles_correct = true;
  bool baseline_fidelity = false;

  std::uint64_t units = 0;
  std::uint64_t modified_units = 0;
  std::uint64_t modified_calls = 0;
  std::uint64_t expected_modified = 0;
  double modified_call_fraction = 0.0;
  std::uint64_t sweep_count = 0;

  std::map<std::string, std::uint64_t> api_call_counts;
  std::uint64_t api_calls = 0;
  std::uint64_t adversary_calls = 0;
  std::uint64_t detoured_calls = 0;
  std::uint64_t interpreted_instructions = 0;
  std::uint64_t handler_invocations = 0;
  std::uint64_t perturbation_ops = 0;
  double per_call_overhead = 0.0;
  double detour_per_call_overhead = 0.0;
  double overhead_relative = 0.0;

  std::uint64_t adversary_warnings = 0;
  std::uint64_t scenario_warnings = 0;
  std::vector<TamperRow> tamper_events;
  std::uint64_t prologue_mismatches = 0;
  std::uint64_t guard_trips = 0;
  std::uint64_t clone_rehooks = 0;
  Tick max_restore_latency = 0;
  std::uint64_t terminated_threads = 0;
  std::uint64_t calls_after_termination = 0;
  std::vector<AttackRow> attacks;

  std::uint64_t clone_loads = 0;
  double clone_hook_coverage = 1.0;
  bool clone_load_precedes_call = true;

  std::uint64_t landed_tamper_writes = 0;
  std::uint64_t hooked_clone_loads = 0;
  std::uint64_t guard_trip_faults = 0;
  bool conservation_holds = true;

  std::uint64_t event_count = 0;
  std::string digest;
};

ScenarioReport compute_metrics(const EventLog& log);

/// Canonical JSON: sorted keys, two-space indent, floats with six decimals.
std::string report_to_json(const ScenarioReport& r);
std::string report_csv_header();
std::string report_csv_row(const ScenarioReport& r);
std::string report_to_text(const ScenarioReport& r);

/// Top-level numeric or boolean field of the JSON report, by name.
std::optional<double> metric_value(const ScenarioReport& r, const std::string& name);

struct ExpectationResult {
  Expectation expectation;
  std::optional<double> actual;
  bool passed = false;
};

std::vector<ExpectationResult> check_expectations(const ScenarioReport& r,
                                                  const std::vector<Expectation>& expect);

}  // namespace hookdecoy
