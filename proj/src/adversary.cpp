#include "hookdecoy/adversary.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

namespace hookdecoy {

namespace {

constexpr const char* kTechniqueNames[] = {"POLLING", "OS_HOOK", "MSG_QUEUE", "CLIPBOARD",
                                           "FORM_GRAB"};
constexpr const char* kAttackNames[] = {"TEXT_RESTORE", "IAT_REBIND", "MANUAL_RESOLVE", "SIG_SCAN"};
constexpr const char* kRestoreNames[] = {"MANIFEST", "PRIOR_READ"};

template <typename E, std::size_t N>
std::optional<E> from_names(const char* const (&names)[N], std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  return std::nullopt;
}

constexpr std::size_t kMaxMessagesPerRun = 64;

std::uint32_t load_u32(const Bytes& b, std::size_t at) {
  std::uint32_t v = 0;
  std::memcpy(&v, b.data() + at, sizeof v);
  return v;
}

// "user32.sim" -> "u32", the prefix used for clone load names.
std::string short_stem(const std::string& name) {
  const std::string stem = name.substr(0, name.find('.'));
  std::size_t digits = stem.size();
  while (digits > 1 && std::isdigit(static_cast<unsigned char>(stem[digits - 1]))) --digits;
  return stem.substr(0, 1) + stem.substr(digits);
}

}  // namespace

const char* to_string(Technique t) { return kTechniqueNames[static_cast<int>(t)]; }
const char* to_string(Attack a) { return kAttackNames[static_cast<int>(a)]; }
const char* to_string(RestoreSource r) { return kRestoreNames[static_cast<int>(r)]; }
std::optional<Technique> technique_from_string(std::string_view s) {
  return from_names<Technique>(kTechniqueNames, s);
}
std::optional<Attack> attack_from_string(std::string_view s) {
  return from_names<Attack>(kAttackNames, s);
}
std::optional<RestoreSource> restore_source_from_string(std::string_view s) {
  return from_names<RestoreSource>(kRestoreNames, s);
}

int technique_priority(Technique t) {
  switch (t) {
    case Technique::kMsgQueue: return 11;
    case Technique::kPolling: return 12;
    case Technique::kClipboard: return 13;
    case Technique::kFormGrab: return 14;
    case Technique::kOsHook: return 15;
  }
  return 16;
}

bool ScanPattern::matches(std::span<const Byte> prologue) const {
  if (bytes.empty() || bytes.size() > prologue.size()) return false;
  if (offset) {
    if (*offset + bytes.size() > prologue.size()) return false;
    return std::equal(bytes.begin(), bytes.end(), prologue.begin() + *offset);
  }
  return std::search(prologue.begin(), prologue.end(), bytes.begin(), bytes.end()) != prologue.end();
}

std::vector<ScanPattern> default_scan_patterns() {
  return {{{0xE9}, 0u}, {{0xFF, 0x25}, std::nullopt}};
}

void AdversaryConfig::validate() const {
  if (poll_period < 1) throw SimError(ErrorCode::kConfig, "poll_period must be >= 1");
  if (techniques.empty()) throw SimError(ErrorCode::kConfig, "adversary needs at least one technique");
  for (std::size_t i = 0; i < techniques.size(); ++i)
    for (std::size_t j = i + 1; j < techniques.size(); ++j)
      if (techniques[i] == techniques[j])
        throw SimError(ErrorCode::kConfig, std::string("duplicate technique ") + to_string(techniques[i]));
  for (const auto& p : scan_patterns)
    if (p.bytes.empty()) throw SimError(ErrorCode::kConfig, "empty scan pattern");
}

std::string KeylogOutput::to_text() const {
  std::string out;
  for (const auto& e : entries) {
    out += "[" + e.title + " \xE2\x80\x93 " + std::to_string(e.tick) + "] ";
    for (char c : e.text) {
      if (c == '\t')
        out += "[TAB]";
      else if (c == '\n')
        out += "[ENTER]";
      else
        out += c;
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

Adversary::Adversary(SimProcess& process, Loader& loader, CallGate& gate, AdversaryConfig cfg,
                     std::vector<std::string> scan_scope, Address request_buffer)
    : process_(process),
      loader_(loader),
      gate_(gate),
      cfg_(std::move(cfg)),
      scan_scope_(std::move(scan_scope)),
      request_buffer_(request_buffer) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.techniques.size(); ++i)
    threads_.push_back({.technique = cfg_.techniques[i],
                        .actor = ActorId{kFirstAdversaryActor + static_cast<std::uint32_t>(i)}});
  imports_.owner = threads_.front().actor;
}

ActorId Adversary::actor_for(Technique t) const {
  for (const auto& th : threads_)
    if (th.technique == t) return th.actor;
  throw SimError(ErrorCode::kBadArgument, std::string("technique not enabled: ") + to_string(t));
}

bool Adversary::is_terminated(ActorId actor) const {
  for (const auto& th : threads_)
    if (th.actor == actor) return th.terminated;
  return false;
}

void Adversary::start() {
  for (const ModuleImage& m : loader_.modules()) {
    if (m.origin != ModuleOrigin::kSystem) continue;
    for (const auto& e : m.exports) {
      if (module_of_.contains(e.name)) continue;
      module_of_[e.name] = m.name;
      imports_.bind(m.name, e.name, loader_.get_proc_address(m, e.name));
    }
  }
  for (std::size_t i = 0; i < threads_.size(); ++i) {
    Thread& th = threads_[i];
    process_.emit({.actor = th.actor,
                   .kind = EventKind::kThreadStart,
                   .value = technique_priority(th.technique),
                   .name = to_string(th.technique)});
    th.task = process_.clock().schedule(
        [this, i](Tick now) {
          Thread& t = threads_[i];
          if (t.terminated) return;
          try {
            run(t, now);
          } catch (const ThreadTerminated&) {
          }
        },
        std::max(cfg_.start_tick, process_.now()), technique_priority(th.technique), cfg_.poll_period);
  }
}

void Adversary::terminate(ActorId actor) {
  for (auto& th : threads_) {
    if (th.actor != actor || th.terminated) continue;
    th.terminated = true;
    if (th.task) process_.clock().cancel(*th.task);
    process_.emit({.actor = actor, .kind = EventKind::kTerminate, .name = to_string(th.technique)});
  }
}

void Adversary::finish() {
  for (auto& th : threads_) flush(th, process_.now());
}

void Adversary::check_alive(const Thread& th) const {
  if (th.terminated) throw ThreadTerminated{};
}

Address Adversary::entry_for(const std::string& api) const {
  if (auto it = resolved_.find(api); it != resolved_.end()) return it->second;
  auto mod = module_of_.find(api);
  if (mod == module_of_.end()) throw SimError(ErrorCode::kUnknownApi, api);
  const auto slot = imports_.lookup(mod->second, api);
  if (!slot) throw SimError(ErrorCode::kNotExported, api);
  return *slot;
}

ApiValue Adversary::call(Thread& th, const std::string& api, ApiArgs args) {
  check_alive(th);
  ApiValue v = gate_.call(th.actor, entry_for(api), args);
  check_alive(th);
  return v;
}

void Adversary::warn(Thread& th, const std::string& api, const std::string& message) {
  output_.warnings.push_back({process_.now(), message});
  process_.emit({.actor = th.actor, .kind = EventKind::kWarning, .name = api, .text = message});
}

// ---------------------------------------------------------------------------
// Keylog buffering

void Adversary::refresh_title(Thread& th, Tick now) {
  const ApiValue hwnd = call(th, "GetForegroundWindow");
  const ApiValue title = call(th, "GetWindowTextW", {.arg = hwnd.num});
  if (!th.title_known || title.text != th.title) {
    flush(th, now);
    th.title = title.text;
    th.title_known = true;
  }
}

void Adversary::append(Thread& th, char c, Tick now) {
  if (th.buffer.empty()) th.buffer_start = now;
  th.buffer += c;
  if (c == '\n') flush(th, now);
}

void Adversary::flush(Thread& th, Tick now) {
  if (th.buffer.empty()) return;
  const char* channel = to_string(th.technique);
  output_.entries.push_back({th.buffer_start, th.title, th.buffer, channel});
  process_.emit({.tick = now,
                 .actor = th.actor,
                 .kind = EventKind::kKeylog,
                 .value = static_cast<std::int64_t>(th.buffer_start),
                 .name = channel,
                 .text = th.buffer,
                 .note = th.title});
  th.buffer.clear();
}

// ---------------------------------------------------------------------------
// Thread body

void Adversary::run(Thread& th, Tick now) {
  const bool attack_thread = &th == &threads_.front();
  if (attack_thread) {
    if (cfg_.evasion_checks && !evasion_done_) {
      evasion_done_ = true;
      evasion_check(th);
    }
    if (cfg_.restore_source == RestoreSource::kPriorRead && saved_prologues_.empty()) {
      for (const auto& api : cfg_.attack_targets) {
        const ReadResult r = process_.read_bytes(th.actor, entry_for(api), kPrologueLen);
        saved_prologues_[api] = r.bytes;
      }
    }
    if (!attacks_done_ && now >= cfg_.attack_trigger_tick) run_attacks(th, now);
    else if (attacks_done_ && cfg_.periodic_rescan &&
             std::find(cfg_.attacks.begin(), cfg_.attacks.end(), Attack::kSigScan) != cfg_.attacks.end())
      attack_sig_scan(th);
  }
  // Capture waits for the signature scan so avoided APIs are never touched.
  const bool scans = std::find(cfg_.attacks.begin(), cfg_.attacks.end(), Attack::kSigScan) !=
                     cfg_.attacks.end();
  if (scans && !scan_done_) return;

  switch (th.technique) {
    case Technique::kPolling: poll_sweep(th, now); break;
    case Technique::kMsgQueue: drain_messages(th, now); break;
    case Technique::kOsHook: os_hook(th, now); break;
    case Technique::kClipboard: clipboard(th, now); break;
    case Technique::kFormGrab: form_grab(th, now); break;
  }
}

void Adversary::evasion_check(Thread& th) {
  if (call(th, "IsDebuggerPresent").num != 0) warn(th, "IsDebuggerPresent", "debugger present");
  if (call(th, "NtQueryInformationProcess", {.arg = kProcessDebugPort}).num != 0)
    warn(th, "NtQueryInformationProcess", "debug port set");
}

void Adversary::poll_sweep(Thread& th, Tick now) {
  if (avoided_.contains("GetAsyncKeyState")) return;
  refresh_title(th, now);
  const ApiValue ks = call(th, "GetKeyboardState");
  const bool caps = ks.data.size() > kVkCapital && (ks.data[kVkCapital] & 0x01) != 0;
  std::array<bool, 256> down{};
  for (std::uint32_t vk = kVkFirst; vk <= kVkLast; ++vk) {
    down[vk] = (call(th, "GetAsyncKeyState", {.arg = vk}).num & 0x8000) != 0;
    if (down[vk] && !th.prev_down[vk] && !is_modifier_vk(vk))
      if (const auto c = char_for_vk(vk, down[kVkShift], caps)) append(th, *c, now);
  }
  th.prev_down = down;
}

void Adversary::drain_messages(Thread& th, Tick now) {
  if (avoided_.contains("PeekMessage")) return;
  bool titled = false;
  for (std::size_t i = 0; i < kMaxMessagesPerRun; ++i) {
    const ApiValue v = call(th, "PeekMessage", {.arg = 1});
    if (!v.msg) break;
    if (v.msg->id != kWmChar) continue;
    if (!titled) {
      refresh_title(th, now);
      titled = true;
    }
    append(th, v.msg->ch, now);
  }
}

void Adversary::os_hook(Thread& th, Tick now) {
  if (!th.hook_tried) {
    th.hook_tried = true;
    if (avoided_.contains("SetWindowsHookEx")) return;
    ApiArgs args;
    args.arg = kWhKeyboardLL;
    Thread* self = &th;
    args.proc = [self](const KeyEvent& e) {
      if (!self->terminated && e.kind == KeyEventKind::kDown && e.ch)
        self->hook_queue.emplace_back(e.tick, *e.ch);
    };
    if (call(th, "SetWindowsHookEx", std::move(args)).num == 0)
      warn(th, "SetWindowsHookEx", "keyboard hook registration failed");
    return;
  }
  if (th.hook_queue.empty()) return;
  refresh_title(th, now);
  auto queued = std::move(th.hook_queue);
  th.hook_queue.clear();
  for (const auto& [tick, c] : queued) append(th, c, now);
}

void Adversary::clipboard(Thread& th, Tick now) {
  if (avoided_.contains("GetClipboardData")) return;
  call(th, "OpenClipboard");
  const ApiValue v = call(th, "GetClipboardData");
  call(th, "CloseClipboard");
  if (v.text.empty() || v.text == th.last_clipboard) return;
  th.last_clipboard = v.text;
  refresh_title(th, now);
  flush(th, now);
  th.buffer_start = now;
  th.buffer = v.text;
  flush(th, now);
}

void Adversary::form_grab(Thread& th, Tick now) {
  (void)now;
  if (request_buffer_ == 0 || avoided_.contains("WSASend")) return;
  const ReadResult head = process_.read_bytes(th.actor, request_buffer_, 8);
  check_alive(th);
  if (!head.ok()) return;
  const std::uint32_t count = load_u32(head.bytes, 0);
  if (count <= th.requests_seen) return;
  const std::uint32_t used = load_u32(head.bytes, 4);
  const ReadResult body = process_.read_bytes(th.actor, request_buffer_ + 8, used);
  check_alive(th);
  if (!body.ok()) return;
  std::size_t at = 0;
  for (std::uint32_t i = 0; i < count && at + 4 <= body.bytes.size(); ++i) {
    const std::uint32_t len = load_u32(body.bytes, at);
    at += 4;
    if (i >= th.requests_seen) {
      const std::string rec(body.bytes.begin() + static_cast<std::ptrdiff_t>(at),
                            body.bytes.begin() + static_cast<std::ptrdiff_t>(at + len));
      const auto nl = rec.find('\n');
      ApiArgs args;
      args.url = rec.substr(0, nl);
      args.text = nl == std::string::npos ? std::string{} : rec.substr(nl + 1);
      call(th, "WSASend", std::move(args));
    }
    at += len;
  }
  th.requests_seen = count;
}

// ---------------------------------------------------------------------------
// Attacks

void Adversary::run_attacks(Thread& th, Tick now) {
  attacks_done_ = true;
  for (Attack a : cfg_.attacks) {
    process_.emit({.tick = now, .actor = th.actor, .kind = EventKind::kAttack, .name = to_string(a)});
    switch (a) {
      case Attack::kTextRestore: attack_text_restore(th); break;
      case Attack::kIatRebind:
      case Attack::kManualResolve: attack_clone(th, a); break;
      case Attack::kSigScan: attack_sig_scan(th); break;
    }
  }
}

void Adversary::attack_text_restore(Thread& th) {
  for (const auto& api : cfg_.attack_targets) {
    const Address target = entry_for(api);
    Bytes clean;
    if (cfg_.restore_source == RestoreSource::kPriorRead) {
      clean = saved_prologues_.at(api);
    } else {
      const ModuleImage* m = loader_.module_at(target);
      const LibraryTemplate* t = m ? loader_.manifest().find(m->template_name) : nullptr;
      const ExportEntry* e = m ? m->find_export(api) : nullptr;
      if (!t || !e) throw SimError(ErrorCode::kNotExported, api);
      clean = loader_.manifest().clean_prologue(*t, *e);
    }
    const auto old = process_.protect(th.actor, target, kPrologueLen, Protection::kReadWrite);
    process_.write_bytes(th.actor, target, clean);
    check_alive(th);
    const Protection back = old.front() == Protection::kGuard ? Protection::kExecuteRead : old.front();
    process_.protect(th.actor, target, kPrologueLen, back);
    // Restore once and move on; the hook is never re-checked.
  }
}

void Adversary::attack_clone(Thread& th, Attack a) {
  const bool rebind = a == Attack::kIatRebind;
  std::map<std::string, const ModuleImage*> clones;  // system load name -> clone
  for (const auto& api : cfg_.attack_targets) {
    const auto mod = module_of_.find(api);
    if (mod == module_of_.end()) throw SimError(ErrorCode::kUnknownApi, api);
    const ModuleImage* sys = loader_.find(mod->second);
    auto& clone = clones[sys->name];
    if (!clone) {
      const std::string load_name = short_stem(sys->name) + (rebind ? "copy.sim" : "manual.sim");
      clone = &loader_.load_module(sys->template_name, load_name, th.actor);
      check_alive(th);
    }
    const Address resolved = loader_.get_proc_address(*clone, api);
    if (rebind)
      imports_.bind(sys->name, api, resolved);
    else
      resolved_[api] = resolved;
  }
}

void Adversary::attack_sig_scan(Thread& th) {
  for (const auto& api : cfg_.scan_targets) {
    const Address entry = entry_for(api);
    const ModuleImage* m = loader_.module_at(entry);
    if (!m) continue;
    const bool in_scope = std::any_of(scan_scope_.begin(), scan_scope_.end(), [&](const auto& s) {
      return s == m->name || s == m->template_name;
    });
    if (!in_scope) continue;
    const ReadResult r = process_.read_bytes(th.actor, entry, kPrologueLen);
    check_alive(th);
    if (!r.ok()) continue;
    for (const auto& p : cfg_.scan_patterns) {
      if (!p.matches(r.bytes)) continue;
      if (avoided_.insert(api).second) warn(th, api, "hook signature detected in " + api);
      break;
    }
  }
  scan_done_ = true;
}

}  // namespace hookdecoy
