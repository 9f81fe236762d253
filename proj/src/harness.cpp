#include "hookdecoy/harness.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "hookdecoy/apisim.hpp"
#include "hookdecoy/deception.hpp"
#include "hookdecoy/hooklayer.hpp"
#include "hookdecoy/integrity.hpp"
#include "hookdecoy/loader.hpp"

namespace hookdecoy {

namespace {

constexpr int kDefensePriority = 0;
constexpr int kInputPriority = 1;
constexpr int kAppPriority = 5;
constexpr std::size_t kAppMessagesPerTick = 64;

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", r);
  return buf;
}

/// The benign foreground application: drains its message queue and submits
/// scripted form posts through the request buffer.
class App {
 public:
  App(SimProcess& process, Loader& loader, CallGate& gate, const UserScript& script, Address buffer)
      : process_(process), gate_(gate), script_(script), buffer_(buffer) {
    for (const ModuleImage& m : loader.modules())
      for (const auto& e : m.exports) entries_.try_emplace(e.name, loader.get_proc_address(m, e.name));
  }

  void tick(Tick now) {
    for (std::size_t i = 0; i < kAppMessagesPerTick; ++i)
      if (!gate_.call(kAppActor, entries_.at("PeekMessage"), {.arg = 1}).msg) break;
    while (next_post_ < script_.form_posts.size() && script_.form_posts[next_post_].tick <= now)
      submit(script_.form_posts[next_post_++]);
  }

 private:
  void submit(const FormPost& post) {
    const std::string record = post.url + "\n" + post.body;
    const auto len = static_cast<std::uint32_t>(record.size());
    if (8 + used_ + 4 + len > kRequestBufferSize)
      throw SimError(ErrorCode::kConfig, "form posts overflow the request buffer");
    Bytes rec(4 + len);
    std::memcpy(rec.data(), &len, 4);
    std::memcpy(rec.data() + 4, record.data(), len);
    process_.write_bytes(kAppActor, buffer_ + 8 + used_, rec);
    used_ += 4 + len;
    ++count_;
    Bytes head(8);
    std::memcpy(head.data(), &count_, 4);
    std::memcpy(head.data() + 4, &used_, 4);
    process_.write_bytes(kAppActor, buffer_, head);
    ApiArgs args;
    args.url = post.url;
    args.text = post.body;
    gate_.call(kAppActor, entries_.at("HttpSendRequest"), args);
  }

  SimProcess& process_;
  CallGate& gate_;
  const UserScript& script_;
  Address buffer_;
  std::map<std::string, Address> entries_;
  std::size_t next_post_ = 0;
  std::uint32_t count_ = 0;
  std::uint32_t used_ = 0;
};

void emit_truth(SimProcess& p, const ScenarioConfig& cfg) {
  const UserScript& s = cfg.user_script;
  p.emit({.kind = EventKind::kTruth, .name = "KEYS", .text = s.typed_text()});
  for (const auto& c : s.clipboard_sets)
    p.emit({.kind = EventKind::kTruth, .value = static_cast<std::int64_t>(c.tick), .name = "CLIPBOARD", .text = c.text});
  for (const auto& f : s.form_posts)
    p.emit({.kind = EventKind::kTruth,
            .value = static_cast<std::int64_t>(f.tick),
            .name = "FORM",
            .text = f.body,
            .note = f.url});
  std::string fields;
  for (const auto& f : cfg.policy.sensitive_fields) fields += (fields.empty() ? "" : ",") + f;
  p.emit({.kind = EventKind::kTruth, .name = "SENSITIVE_FIELDS", .text = fields});
  for (const auto& w : s.foreground_window)
    p.emit({.kind = EventKind::kTruth, .value = static_cast<std::int64_t>(w.tick), .name = "WINDOW", .text = w.title});
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SimError(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SimError(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw SimError(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

bool RunResult::passed() const {
  for (const auto& e : expectations)
    if (!e.passed) return false;
  return true;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  SimProcess process;
  Loader loader(process, TemplateManifest::load_default());
  for (const auto& t : loader.manifest().templates()) loader.load_module(t.name, t.name);

  NativeApi native(process, cfg.user_script, cfg.environment);
  CallGate gate(process, loader, native);
  const Address request_buffer = process.alloc_region(kRequestBufferSize, Protection::kReadWrite, kAppActor);

  const FaultHandler default_handler = [&process](const Fault& f) {
    process.emit({.actor = f.actor,
                  .kind = EventKind::kScenarioWarning,
                  .addr = f.address,
                  .name = to_string(f.kind),
                  .text = to_string(f.access)});
    return FaultDisposition::kRetry;
  };
  process.set_fault_handler(default_handler);

  App app(process, loader, gate, cfg.user_script, request_buffer);
  process.clock().schedule([&app](Tick now) { app.tick(now); }, 0, kAppPriority, 1);
  process.clock().schedule([&native](Tick now) { native.dispatch_input(now); }, 0, kInputPriority, 1);

  process.emit({.kind = EventKind::kScenario,
                .len = static_cast<std::uint32_t>(cfg.duration),
                .value = static_cast<std::int64_t>(cfg.seed),
                .name = cfg.name});
  emit_truth(process, cfg);

  Adversary adversary(process, loader, gate, cfg.adversary, cfg.integrity.scan_scope, request_buffer);
  adversary.start();

  Rng trampoline_rng = Rng::derive(cfg.seed, kStreamTrampoline);
  std::unique_ptr<HookLayer> hooks;
  std::unique_ptr<DeceptionEngine> engine;
  std::unique_ptr<IntegrityManager> integrity;
  if (cfg.defense.enabled) {
    process.clock().schedule(
        [&](Tick) {
          hooks = std::make_unique<HookLayer>(process, kDefenseActor);
          for (const auto& api : cfg.defense.hooks) {
            const ModuleImage* target = nullptr;
            for (const ModuleImage& m : loader.modules())
              if (m.origin == ModuleOrigin::kSystem && m.find_export(api)) {
                target = &m;
                break;
              }
            if (!target) throw SimError(ErrorCode::kExportMissing, api);
            hooks->install_hook(*target, api, handler_id_for(api), cfg.obfuscate, trampoline_rng);
          }
          engine = std::make_unique<DeceptionEngine>(process, native, cfg.policy);
          engine->register_handlers(gate);
          integrity = std::make_unique<IntegrityManager>(process, loader, *hooks, cfg.integrity,
                                                         cfg.obfuscate, trampoline_rng);
          integrity->set_default_fault_handler(default_handler);
          integrity->set_terminate_callback([&adversary](ActorId a) { adversary.terminate(a); });
          integrity->activate();
          const std::int64_t flags = (cfg.integrity.watchdog ? 1 : 0) |
                                     (cfg.integrity.clone_rehook ? 2 : 0) | (cfg.obfuscate ? 4 : 0);
          process.emit({.actor = kDefenseActor,
                        .kind = EventKind::kDefenseActive,
                        .len = static_cast<std::uint32_t>(cfg.integrity.guard_mode),
                        .value = static_cast<std::int64_t>(cfg.integrity.watchdog_period),
                        .aux = flags,
                        .name = to_string(cfg.policy.mode),
                        .text = format_ratio(cfg.policy.mode == DeceptionMode::kInputPerturbation
                                                 ? cfg.policy.masking_ratio
                                                 : 0.0)});
        },
        cfg.defense.activation_tick, kDefensePriority);
  }

  process.clock().advance(cfg.duration - 1);
  adversary.finish();

  RunResult result;
  result.log = std::move(process.log());
  result.report = compute_metrics(result.log);
  result.keylog = adversary.output();
  result.expectations = check_expectations(result.report, cfg.expect);
  if (hooks)
    for (const auto& [key, rec] : hooks->registry())
      result.final_hooks.push_back(
          {rec.module_name, rec.export_name, hooks->read_prologue(rec.target) == rec.expected_layout});
  return result;
}

std::vector<std::string> write_outputs(const RunResult& result, const ScenarioConfig& cfg,
                                       const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw SimError(ErrorCode::kIo, "cannot create " + dir + ": " + ec.message());
  std::vector<std::string> written;
  const auto put = [&](const char* name, const std::string& text) {
    const fs::path p = fs::path(dir) / name;
    write_file(p, text);
    written.push_back(p.string());
  };
  put("events.jsonl", result.log.to_jsonl());
  put("keylog.log", result.keylog.to_text());
  for (const auto& f : cfg.formats) {
    if (f == "json") put("report.json", report_to_json(result.report));
    else if (f == "csv") put("report.csv", report_csv_header() + "\n" + report_csv_row(result.report) + "\n");
    else if (f == "text") put("report.txt", report_to_text(result.report));
  }
  return written;
}

VerifyResult verify_report(const std::string& report_json, const std::string& events_jsonl) {
  EventLog log;
  try {
    log = EventLog::from_jsonl(events_jsonl);
  } catch (const std::exception& e) {
    return {false, std::string("event log does not parse: ") + e.what()};
  }
  if (log.to_jsonl() != events_jsonl)
    return {false, "event log is not in canonical form (re-serialization differs)"};
  const std::string recomputed = report_to_json(compute_metrics(log));
  if (recomputed == report_json) return {true, "report matches event log"};
  std::istringstream a(report_json), b(recomputed);
  std::string la, lb;
  for (int line = 1;; ++line) {
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga && !gb) break;
    if (!ga || !gb || la != lb)
      return {false, "line " + std::to_string(line) + ": report has '" + (ga ? la : "<eof>") +
                         "', log gives '" + (gb ? lb : "<eof>") + "'"};
  }
  return {false, "report differs from recomputation"};
}

VerifyResult verify_files(const std::string& report_path, const std::string& events_path) {
  return verify_report(read_file(report_path), read_file(events_path));
}

}  // namespace hookdecoy
