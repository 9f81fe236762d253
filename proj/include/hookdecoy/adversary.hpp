#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hookdecoy/apisim.hpp"
#include "hookdecoy/loader.hpp"
#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

enum class Technique : std::uint8_t { kPolling, kOsHook, kMsgQueue, kClipboard, kFormGrab };
enum class Attack : std::uint8_t { kTextRestore, kIatRebind, kManualResolve, kSigScan };
/// Where TEXT_RESTORE gets its clean bytes: the template manifest, or a read
/// of the live prologue taken when the adversary starts.
enum class RestoreSource : std::uint8_t { kManifest, kPriorRead };

const char* to_string(Technique t);
const char* to_string(Attack a);
const char* to_string(RestoreSource r);
std::optional<Technique> technique_from_string(std::string_view s);
std::optional<Attack> attack_from_string(std::string_view s);
std::optional<RestoreSource> restore_source_from_string(std::string_view s);

/// Within-tick ordering of the capture threads.
int technique_priority(Technique t);

struct ScanPattern {
  Bytes bytes;
  std::optional<std::uint32_t> offset;  // nullopt matches anywhere in the prologue

  bool matches(std::span<const Byte> prologue) const;
};

std::vector<ScanPattern> default_scan_patterns();

struct AdversaryConfig {
  std::vector<Technique> techniques = {Technique::kPolling};
  std::vector<Attack> attacks;
  Tick poll_period = 1;
  Tick start_tick = 0;
  Tick attack_trigger_tick = 0;
  std::vector<std::string> attack_targets = {"GetAsyncKeyState"};
  std::vector<std::string> scan_targets = {"GetAsyncKeyState", "SetWindowsHookEx"};
  std::vector<ScanPattern> scan_patterns = default_scan_patterns();
  RestoreSource restore_source = RestoreSource::kManifest;
  bool evasion_checks = false;
  bool periodic_rescan = false;

  void validate() const;
};

struct KeylogEntry {
  Tick tick = 0;
  std::string title;
  std::string text;
  std::string channel;
};

struct AdversaryWarning {
  Tick tick = 0;
  std::string message;
};

struct KeylogOutput {
  std::vector<KeylogEntry> entries;
  std::vector<AdversaryWarning> warnings;

  /// keylog.log form: one "[title – tick] text" line per entry, with tab and
  /// newline spelled [TAB] and [ENTER].
  std::string to_text() const;
};

/// Application request buffer shared with the form grabber:
/// [u32 count][u32 used][records...], each record [u32 len][url '\n' body].
inline constexpr std::uint32_t kRequestBufferSize = kPageSize;

/// The multi-technique keylogger. Each technique is a recurring task with its
/// own actor id; attacks run on the first technique's thread.
class Adversary {
 public:
  Adversary(SimProcess& process, Loader& loader, CallGate& gate, AdversaryConfig cfg,
            std::vector<std::string> scan_scope, Address request_buffer = 0);

  /// Binds imports and schedules one task per technique.
  void start();
  /// Stops a thread for good. Called by the integrity manager in strict mode.
  void terminate(ActorId actor);
  /// Flushes every pending keylog buffer.
  void finish();

  ActorId actor_for(Technique t) const;
  bool is_terminated(ActorId actor) const;
  const KeylogOutput& output() const { return output_; }
  const ImportTable& imports() const { return imports_; }
  const std::set<std::string>& avoided() const { return avoided_; }

 private:
  struct ThreadTerminated {};
  struct Thread {
    Technique technique;
    ActorId actor;
    std::optional<TaskId> task;
    bool terminated = false;
    // Keylog buffering.
    std::string buffer;
    Tick buffer_start = 0;
    std::string title;
    bool title_known = false;
    // Polling edge detection.
    std::array<bool, 256> prev_down{};
    // OS hook.
    bool hook_tried = false;
    std::vector<std::pair<Tick, char>> hook_queue;
    // Clipboard.
    std::string last_clipboard;
    // Form grabber.
    std::uint32_t requests_seen = 0;
  };

  void run(Thread& th, Tick now);
  void run_attacks(Thread& th, Tick now);
  void attack_text_restore(Thread& th);
  void attack_clone(Thread& th, Attack a);
  void attack_sig_scan(Thread& th);
  void evasion_check(Thread& th);

  void poll_sweep(Thread& th, Tick now);
  void drain_messages(Thread& th, Tick now);
  void os_hook(Thread& th, Tick now);
  void clipboard(Thread& th, Tick now);
  void form_grab(Thread& th, Tick now);

  ApiValue call(Thread& th, const std::string& api, ApiArgs args = {});
  Address entry_for(const std::string& api) const;
  void check_alive(const Thread& th) const;
  void refresh_title(Thread& th, Tick now);
  void append(Thread& th, char c, Tick now);
  void flush(Thread& th, Tick now);
  void warn(Thread& th, const std::string& api, const std::string& message);

  SimProcess& process_;
  Loader& loader_;
  CallGate& gate_;
  AdversaryConfig cfg_;
  std::vector<std::string> scan_scope_;
  Address request_buffer_;
  std::vector<Thread> threads_;
  std::map<std::string, std::string> module_of_;  // export -> system load name
  ImportTable imports_;
  std::map<std::string, Address> resolved_;       // manually resolved pointers
  std::map<std::string, Bytes> saved_prologues_;
  std::set<std::string> avoided_;
  bool attacks_done_ = false;
  bool scan_done_ = false;
  bool evasion_done_ = false;
  KeylogOutput output_;
};

}  // namespace hookdecoy
