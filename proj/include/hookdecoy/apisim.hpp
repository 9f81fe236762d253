#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hookdecoy/keyboard.hpp"
#include "hookdecoy/loader.hpp"
#include "hookdecoy/rng.hpp"
#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

// Window messages delivered by the simulated queue.
inline constexpr std::uint32_t kWmKeyDown = 0x100;
inline constexpr std::uint32_t kWmKeyUp = 0x101;
inline constexpr std::uint32_t kWmChar = 0x102;

inline constexpr std::int64_t kWhKeyboardLL = 13;
inline constexpr std::int64_t kProcessDebugPort = 7;

struct Message {
  std::uint32_t id = 0;
  std::uint32_t vk = 0;
  char ch = 0;

  bool operator==(const Message&) const = default;
};

using KeyboardProc = std::function<void(const KeyEvent&)>;

/// Arguments of one simulated API call. Which fields matter depends on the API.
struct ApiArgs {
  std::int64_t arg = 0;   // vk, hwnd, hook type, info class, remove flag
  std::string text;       // request or send body
  std::string url;
  KeyboardProc proc;      // SetWindowsHookEx callback
};

struct ApiValue {
  std::int64_t num = 0;
  std::string text;
  Bytes data;                  // GetKeyboardState
  std::optional<Message> msg;  // PeekMessage / GetMessage

  bool operator==(const ApiValue& o) const {
    return num == o.num && text == o.text && data == o.data && msg == o.msg;
  }
};

/// The simulated API surface, in a fixed order. Detour handler ids are
/// derived from the position in this list.
const std::vector<std::string>& api_names();
bool is_known_api(std::string_view api);
std::uint32_t handler_id_for(std::string_view api);
std::optional<std::string> api_for_handler(std::uint32_t handler_id);

/// Down and toggle state of all 256 virtual keys at one instant.
struct KeyboardState {
  std::array<bool, 256> down{};
  bool caps_toggled = false;

  bool operator==(const KeyboardState&) const = default;
};

/// Read-only view of the user script used by native semantics and by the
/// defense. Adversary code never holds one.
class TruthView {
 public:
  explicit TruthView(const UserScript& script);

  /// Key state after applying every event with tick <= now.
  const KeyboardState& key_state(Tick now);
  /// Tick of the latest keystroke event at or before now.
  std::optional<Tick> last_key_activity(Tick now) const;
  /// True if any key is down at now or any key event happens at now.
  bool key_activity_at(Tick now);
  std::span<const KeyEvent> key_events_at(Tick t) const;

  /// Next queued message for this caller with tick <= now.
  std::optional<Message> next_message(ActorId caller, Tick now, bool remove);
  std::optional<Tick> next_message_tick(ActorId caller) const;

  std::string clipboard_at(Tick now) const;
  /// 1-based window handle, 0 when no window has been shown yet.
  std::int64_t foreground_at(Tick now) const;
  std::string title_of(std::int64_t hwnd) const;

  const UserScript& script() const { return script_; }

 private:
  struct TimedMessage {
    Tick tick;
    Message msg;
  };

  const UserScript& script_;
  KeyboardState state_;
  std::size_t key_cursor_ = 0;
  Tick state_tick_ = 0;
  bool state_valid_ = false;
  std::vector<TimedMessage> messages_;
  std::map<ActorId, std::size_t> message_cursor_;
};

struct Environment {
  bool instrumented = false;
  std::uint32_t tick_ms = 10;
  std::uint32_t jitter_ms = 0;
  std::uint64_t seed = 0;
};

/// Host-implemented native semantics of every export in the manifest.
class NativeApi {
 public:
  NativeApi(SimProcess& process, const UserScript& script, Environment env);

  ApiValue invoke(const std::string& api, ActorId caller, const ApiArgs& args);

  /// Registration used by SetWindowsHookEx; returns a handle > 0.
  std::int64_t register_keyboard_hook(ActorId owner, KeyboardProc proc);
  bool unregister_keyboard_hook(std::int64_t handle);
  std::size_t keyboard_hook_count() const { return hooks_.size(); }
  /// Feeds this tick's keystrokes to every registered keyboard hook.
  void dispatch_input(Tick now);

  /// GetTickCount without instrumentation jitter.
  std::int64_t clean_tick_count() const;

  TruthView& truth() { return truth_; }
  const Environment& environment() const { return env_; }

 private:
  struct Registration {
    std::int64_t handle;
    ActorId owner;
    KeyboardProc proc;
  };

  SimProcess& process_;
  TruthView truth_;
  Environment env_;
  Rng jitter_;
  std::vector<Registration> hooks_;
  std::int64_t next_hook_ = 1;
};

/// Per-call context handed to detour handlers.
struct CallContext {
  ActorId caller = kSystemActor;
  std::string api;
  Address entry = 0;
  bool modified = false;
  bool forwarded = false;  // the handler ran the original function
};

using DetourHandler = std::function<ApiValue(CallContext&, const ApiArgs&)>;

struct CallStats {
  std::uint64_t calls = 0;
  std::uint64_t detoured = 0;
  std::uint64_t instructions = 0;
};

/// Entry point for every simulated API call: interprets the bytes at entry
/// and dispatches to native semantics or a detour handler.
class CallGate {
 public:
  CallGate(SimProcess& process, const Loader& loader, NativeApi& native);

  ApiValue call(ActorId caller, Address entry, const ApiArgs& args = {});

  void register_handler(std::uint32_t handler_id, DetourHandler handler);
  bool has_handler(std::uint32_t handler_id) const { return handlers_.contains(handler_id); }

  NativeApi& native() { return native_; }
  const CallStats& stats() const { return stats_; }

 private:
  SimProcess& process_;
  const Loader& loader_;
  NativeApi& native_;
  std::map<std::uint32_t, DetourHandler> handlers_;
  CallStats stats_;
};

}  // namespace hookdecoy
