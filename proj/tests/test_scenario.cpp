#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "hookdecoy/harness.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace hookdecoy;

namespace {

std::string minimal(const std::string& extra = "") {
  return R"({"name": "t", "seed": 3, "duration": 40,
             "user_script": {"typing": [{"text": "ab", "start": 5, "interval": 3}]})" +
         extra + "}";
}

}  // namespace

TEST_CASE("minimal scenario parses with defaults") {
  const ScenarioConfig cfg = parse_scenario(minimal());
  CHECK(cfg.name == "t");
  CHECK(cfg.seed == 3);
  CHECK(cfg.policy.rng_seed == 3);
  CHECK(cfg.environment.seed == 3);
  CHECK(cfg.obfuscate);
  CHECK(cfg.integrity.watchdog_period == 10);
  CHECK(cfg.user_script.typed_text() == "ab");
}

TEST_CASE("config errors are reported") {
  CHECK_THROWS_AS(parse_scenario("{"), SimError);
  CHECK_THROWS_AS(parse_scenario(minimal(R"(, "bogus_key": 1)")), SimError);
  CHECK_THROWS_AS(parse_scenario(minimal(R"(, "policy": {"masking_ratio": 2.0, "mode": "INPUT_PERTURBATION"})")),
                  SimError);
  CHECK_THROWS_AS(parse_scenario(minimal(R"(, "integrity": {"watchdog_period": 0})")), SimError);
  CHECK_THROWS_AS(parse_scenario(minimal(R"(, "adversary": {"techniques": []})")), SimError);
  CHECK_THROWS_AS(parse_scenario(minimal(R"(, "adversary": {"techniques": ["TELEPATHY"]})")), SimError);
  CHECK_THROWS_AS(parse_scenario(minimal(R"(, "user_script_file": "does/not/exist.json")")), SimError);
  CHECK_THROWS_AS(parse_scenario(R"({"name": "t", "duration": 0})"), SimError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), SimError);
}

TEST_CASE("expectations") {
  const ScenarioConfig cfg = parse_scenario(minimal(R"(, "expect": {"true_leak_count": {"eq": 0}, "sweep_count": {"ge": 1}})"));
  REQUIRE(cfg.expect.size() == 2);
  const RunResult r = run_scenario(cfg);
  CHECK(r.passed());
  CHECK(metric_value(r.report, "decoy_purity").value() == 1.0);
  CHECK_FALSE(metric_value(r.report, "no_such_metric"));
}

TEST_CASE("report JSON is canonical and round-trips") {
  const RunResult r = run_scenario(parse_scenario(minimal()));
  const std::string text = report_to_json(r.report);
  const auto j = nlohmann::json::parse(text);
  std::size_t last = 0;
  for (const auto& [key, value] : j.items()) {
    const auto at = text.find("\n  \"" + key + "\": ");
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
  CHECK(text.find("\"decoy_purity\": 1.000000") != std::string::npos);
  CHECK(report_to_json(compute_metrics(EventLog::from_jsonl(r.log.to_jsonl()))) == text);
}

TEST_CASE("CSV header and row agree") {
  const RunResult r = run_scenario(parse_scenario(minimal()));
  const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(count(report_csv_header()) == count(report_csv_row(r.report)));
  CHECK(report_csv_header().rfind("scenario,", 0) == 0);
}

TEST_CASE("verify detects a tampered report") {
  const RunResult r = run_scenario(parse_scenario(minimal()));
  std::string report = report_to_json(r.report);
  const std::string events = r.log.to_jsonl();
  CHECK(verify_report(report, events).ok);
  const auto at = report.find("\"units\": ");
  REQUIRE(at != std::string::npos);
  report.insert(at + 9, "9");
  const VerifyResult v = verify_report(report, events);
  CHECK_FALSE(v.ok);
  CHECK(v.message.find("units") != std::string::npos);
}

TEST_CASE("write_outputs produces every requested file") {
  const ScenarioConfig cfg = parse_scenario(minimal());
  const RunResult r = run_scenario(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "hookdecoy_unit_outputs";
  std::filesystem::remove_all(dir);
  const auto files = write_outputs(r, cfg, dir.string());
  CHECK(files.size() == 5);
  for (const auto& f : files) CHECK(std::filesystem::exists(f));
  CHECK(verify_files((dir / "report.json").string(), (dir / "events.jsonl").string()).ok);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped scenarios are listed and pass") {
  const auto files = list_scenarios(default_scenario_dir());
  CHECK(files.size() == 7);
  for (const auto& f : files) {
    CAPTURE(f);
    const RunResult r = run_scenario(load_scenario(f));
    for (const auto& e : r.expectations) {
      CAPTURE(e.expectation.metric);
      CHECK(e.passed);
    }
  }
}

TEST_CASE("keylog text form") {
  KeylogOutput k;
  k.entries.push_back({.tick = 12, .title = "Notepad", .text = "a\tb\n", .channel = "POLLING"});
  CHECK(k.to_text() == "[Notepad \xE2\x80\x93 12] a[TAB]b[ENTER]\n");
}
