#include <algorithm>

#include "hookdecoy/apisim.hpp"
#include "hookdecoy/interp.hpp"

namespace hookdecoy {

const std::vector<std::string>& api_names() {
  static const std::vector<std::string> names = {
      "GetAsyncKeyState", "GetKeyState",       "GetKeyboardState",    "PeekMessage",
      "GetMessage",       "SetWindowsHookEx",  "UnhookWindowsHookEx", "GetForegroundWindow",
      "GetWindowTextW",   "OpenClipboard",     "GetClipboardData",    "CloseClipboard",
      "IsDebuggerPresent", "GetTickCount",     "NtQueryInformationProcess",
      "HttpSendRequest",  "InternetWriteFile", "WSASend",
  };
  return names;
}

namespace {
constexpr std::uint32_t kHandlerBase = 0x100;
}

bool is_known_api(std::string_view api) {
  const auto& n = api_names();
  return std::find(n.begin(), n.end(), api) != n.end();
}

std::uint32_t handler_id_for(std::string_view api) {
  const auto& n = api_names();
  const auto it = std::find(n.begin(), n.end(), api);
  if (it == n.end()) throw SimError(ErrorCode::kUnknownApi, std::string(api));
  return kHandlerBase + static_cast<std::uint32_t>(it - n.begin());
}

std::optional<std::string> api_for_handler(std::uint32_t handler_id) {
  const auto& n = api_names();
  if (handler_id < kHandlerBase || handler_id - kHandlerBase >= n.size()) return std::nullopt;
  return n[handler_id - kHandlerBase];
}

// ---------------------------------------------------------------------------

TruthView::TruthView(const UserScript& script) : script_(script) {
  for (const auto& k : script.keystrokes) {
    if (k.kind == KeyEventKind::kDown) {
      messages_.push_back({k.tick, {kWmKeyDown, k.vk, 0}});
      if (k.ch) messages_.push_back({k.tick, {kWmChar, k.vk, *k.ch}});
    } else {
      messages_.push_back({k.tick, {kWmKeyUp, k.vk, 0}});
    }
  }
}

const KeyboardState& TruthView::key_state(Tick now) {
  if (!state_valid_ || now < state_tick_) {
    state_ = KeyboardState{};
    key_cursor_ = 0;
    state_valid_ = true;
  }
  const auto& keys = script_.keystrokes;
  while (key_cursor_ < keys.size() && keys[key_cursor_].tick <= now) {
    const KeyEvent& k = keys[key_cursor_++];
    const bool down = k.kind == KeyEventKind::kDown;
    if (down && k.vk == kVkCapital && !state_.down[kVkCapital]) state_.caps_toggled = !state_.caps_toggled;
    state_.down[k.vk & 0xFF] = down;
  }
  state_tick_ = now;
  return state_;
}

std::optional<Tick> TruthView::last_key_activity(Tick now) const {
  const auto& keys = script_.keystrokes;
  auto it = std::upper_bound(keys.begin(), keys.end(), now,
                             [](Tick t, const KeyEvent& k) { return t < k.tick; });
  if (it == keys.begin()) return std::nullopt;
  return std::prev(it)->tick;
}

bool TruthView::key_activity_at(Tick now) {
  const auto& s = key_state(now);
  if (std::any_of(s.down.begin(), s.down.end(), [](bool b) { return b; })) return true;
  return !key_events_at(now).empty();
}

std::span<const KeyEvent> TruthView::key_events_at(Tick t) const {
  const auto& keys = script_.keystrokes;
  auto lo = std::lower_bound(keys.begin(), keys.end(), t,
                             [](const KeyEvent& k, Tick v) { return k.tick < v; });
  auto hi = std::upper_bound(lo, keys.end(), t, [](Tick v, const KeyEvent& k) { return v < k.tick; });
  return {keys.data() + (lo - keys.begin()), static_cast<std::size_t>(hi - lo)};
}

std::optional<Message> TruthView::next_message(ActorId caller, Tick now, bool remove) {
  std::size_t& cur = message_cursor_[caller];
  if (cur >= messages_.size() || messages_[cur].tick > now) return std::nullopt;
  const Message m = messages_[cur].msg;
  if (remove) ++cur;
  return m;
}

std::optional<Tick> TruthView::next_message_tick(ActorId caller) const {
  auto it = message_cursor_.find(caller);
  const std::size_t cur = it == message_cursor_.end() ? 0 : it->second;
  if (cur >= messages_.size()) return std::nullopt;
  return messages_[cur].tick;
}

std::string TruthView::clipboard_at(Tick now) const {
  std::string out;
  for (const auto& c : script_.clipboard_sets) {
    if (c.tick > now) break;
    out = c.text;
  }
  return out;
}

std::int64_t TruthView::foreground_at(Tick now) const {
  std::int64_t hwnd = 0;
  for (std::size_t i = 0; i < script_.foreground_window.size(); ++i) {
    if (script_.foreground_window[i].tick > now) break;
    hwnd = static_cast<std::int64_t>(i) + 1;
  }
  return hwnd;
}

std::string TruthView::title_of(std::int64_t hwnd) const {
  if (hwnd < 1 || static_cast<std::size_t>(hwnd) > script_.foreground_window.size()) return {};
  return script_.foreground_window[hwnd - 1].title;
}

// ---------------------------------------------------------------------------

NativeApi::NativeApi(SimProcess& process, const UserScript& script, Environment env)
    : process_(process), truth_(script), env_(env), jitter_(Rng::derive(env.seed, kStreamJitter)) {}

std::int64_t NativeApi::clean_tick_count() const {
  return static_cast<std::int64_t>(process_.now() * env_.tick_ms);
}

std::int64_t NativeApi::register_keyboard_hook(ActorId owner, KeyboardProc proc) {
  const std::int64_t h = next_hook_++;
  hooks_.push_back({h, owner, std::move(proc)});
  return h;
}

bool NativeApi::unregister_keyboard_hook(std::int64_t handle) {
  auto it = std::find_if(hooks_.begin(), hooks_.end(),
                         [&](const Registration& r) { return r.handle == handle; });
  if (it == hooks_.end()) return false;
  hooks_.erase(it);
  return true;
}

void NativeApi::dispatch_input(Tick now) {
  const auto events = truth_.key_events_at(now);
  if (events.empty() || hooks_.empty()) return;
  const auto hooks = hooks_;
  for (const KeyEvent& e : events)
    for (const auto& r : hooks) r.proc(e);
}

ApiValue NativeApi::invoke(const std::string& api, ActorId caller, const ApiArgs& args) {
  const Tick now = process_.now();
  ApiValue v;
  if (api == "GetAsyncKeyState") {
    v.num = truth_.key_state(now).down[args.arg & 0xFF] ? 0x8000 : 0;
  } else if (api == "GetKeyState") {
    const auto& s = truth_.key_state(now);
    v.num = (s.down[args.arg & 0xFF] ? 0x8000 : 0) |
            (args.arg == kVkCapital && s.caps_toggled ? 1 : 0);
  } else if (api == "GetKeyboardState") {
    const auto& s = truth_.key_state(now);
    v.data.assign(256, 0);
    for (std::size_t vk = 0; vk < 256; ++vk)
      if (s.down[vk]) v.data[vk] = 0x80;
    if (s.caps_toggled) v.data[kVkCapital] |= 0x01;
    v.num = 1;
  } else if (api == "PeekMessage" || api == "GetMessage") {
    v.msg = truth_.next_message(caller, now, api == "GetMessage" || args.arg != 0);
    v.num = v.msg ? 1 : 0;
  } else if (api == "SetWindowsHookEx") {
    if (args.arg == kWhKeyboardLL && args.proc) v.num = register_keyboard_hook(caller, args.proc);
  } else if (api == "UnhookWindowsHookEx") {
    v.num = unregister_keyboard_hook(args.arg) ? 1 : 0;
  } else if (api == "GetForegroundWindow") {
    v.num = truth_.foreground_at(now);
  } else if (api == "GetWindowTextW") {
    v.text = truth_.title_of(args.arg);
    v.num = static_cast<std::int64_t>(v.text.size());
  } else if (api == "OpenClipboard" || api == "CloseClipboard") {
    v.num = 1;
  } else if (api == "GetClipboardData") {
    v.text = truth_.clipboard_at(now);
    v.num = static_cast<std::int64_t>(v.text.size());
  } else if (api == "IsDebuggerPresent") {
    v.num = env_.instrumented ? 1 : 0;
  } else if (api == "GetTickCount") {
    v.num = clean_tick_count();
    if (env_.instrumented && env_.jitter_ms > 0)
      v.num += static_cast<std::int64_t>(jitter_.below(env_.jitter_ms + 1));
  } else if (api == "NtQueryInformationProcess") {
    v.num = (args.arg == kProcessDebugPort && env_.instrumented) ? -1 : 0;
  } else if (api == "HttpSendRequest" || api == "InternetWriteFile" || api == "WSASend") {
    process_.emit({.actor = caller,
                   .kind = EventKind::kNetSend,
                   .len = static_cast<std::uint32_t>(args.text.size()),
                   .name = api,
                   .text = args.text,
                   .note = args.url});
    v.num = static_cast<std::int64_t>(args.text.size());
  } else {
    throw SimError(ErrorCode::kUnknownApi, api);
  }
  return v;
}

// ---------------------------------------------------------------------------

CallGate::CallGate(SimProcess& process, const Loader& loader, NativeApi& native)
    : process_(process), loader_(loader), native_(native) {}

void CallGate::register_handler(std::uint32_t handler_id, DetourHandler handler) {
  handlers_[handler_id] = std::move(handler);
}

ApiValue CallGate::call(ActorId caller, Address entry, const ApiArgs& args) {
  ExecContext ctx;
  ctx.caller = caller;
  const GateReached gate = execute_at(process_, loader_, ctx, entry);
  CallContext cc{caller, {}, entry, false, false};
  ApiValue result;
  const bool detoured = gate.kind == GateReached::Kind::kDetour;
  if (detoured) {
    auto it = handlers_.find(gate.handler_id);
    const auto api = api_for_handler(gate.handler_id);
    if (it == handlers_.end() || !api)
      throw SimError(ErrorCode::kUnknownApi, "no handler " + std::to_string(gate.handler_id));
    cc.api = *api;
    result = it->second(cc, args);
  } else {
    cc.api = gate.export_name;
    result = native_.invoke(cc.api, caller, args);
  }
  // Forwarding runs the relocated original body: the full native path.
  const std::uint64_t steps = gate.steps + (cc.forwarded ? kNativeCallSteps : 0);
  ++stats_.calls;
  stats_.instructions += steps;
  if (detoured) ++stats_.detoured;
  process_.emit({.actor = caller,
                 .kind = EventKind::kApiCall,
                 .addr = entry,
                 .len = static_cast<std::uint32_t>(args.arg),
                 .value = static_cast<std::int64_t>(steps),
                 .aux = (detoured ? 1 : 0) | (cc.modified ? 2 : 0),
                 .name = cc.api});
  return result;
}

}  // namespace hookdecoy
