#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hookdecoy/harness.hpp"
#include "hookdecoy/scenario.hpp"

namespace fs = std::filesystem;
using namespace hookdecoy;

namespace {

int run_one(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out_root,
            const std::vector<std::string>& formats, bool quiet) {
  ScenarioConfig cfg = load_scenario(path);
  if (seed) cfg.reseed(*seed);
  if (!formats.empty()) cfg.formats = formats;
  std::string dir = cfg.output_dir;
  if (!out_root.empty() || dir.empty()) dir = (fs::path(out_root.empty() ? "out" : out_root) / cfg.name).string();

  const RunResult result = run_scenario(cfg);
  write_outputs(result, cfg, dir);
  if (!quiet) std::cout << report_to_text(result.report);
  bool ok = true;
  for (const auto& e : result.expectations) {
    if (e.passed) continue;
    ok = false;
    std::cout << "EXPECTATION FAILED " << cfg.name << ": " << e.expectation.metric << " "
              << e.expectation.op << " " << e.expectation.value << " (actual "
              << (e.actual ? std::to_string(*e.actual) : std::string("missing")) << ")\n";
  }
  std::cout << (ok ? "PASS " : "FAIL ") << cfg.name << " -> " << dir << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hookdecoy: hooking-based deception simulator"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run scenario files and write reports");
  std::vector<std::string> scenarios;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> formats;
  bool quiet = false;
  run->add_option("scenarios", scenarios, "Scenario JSON files")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("-o,--out", out_dir, "Output root; reports go to <out>/<scenario name>");
  run->add_option("-f,--format", formats, "Report formats (json, csv, text)")
      ->check(CLI::IsMember({"json", "csv", "text"}))
      ->delimiter(',');
  run->add_flag("-q,--quiet", quiet, "Only print the pass/fail line");

  auto* verify = app.add_subcommand("verify", "Recompute a report from its event log");
  std::string report_path, events_path;
  verify->add_option("report", report_path, "report.json")->required()->check(CLI::ExistingFile);
  verify->add_option("events", events_path, "events.jsonl")->required()->check(CLI::ExistingFile);

  auto* list = app.add_subcommand("list-scenarios", "List shipped scenarios");
  std::string list_dir = default_scenario_dir();
  list->add_option("-d,--dir", list_dir, "Scenario directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      int rc = 0;
      for (const auto& s : scenarios) rc |= run_one(s, seed, out_dir, formats, quiet);
      return rc;
    }
    if (*verify) {
      const VerifyResult v = verify_files(report_path, events_path);
      std::cout << (v.ok ? "OK: " : "MISMATCH: ") << v.message << "\n";
      return v.ok ? 0 : 1;
    }
    if (*list) {
      for (const auto& path : list_scenarios(list_dir)) {
        const ScenarioConfig cfg = load_scenario(path);
        std::cout << cfg.name << "\t" << path << "\t" << cfg.description << "\n";
      }
      return 0;
    }
  } catch (const SimError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
