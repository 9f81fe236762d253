#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hookdecoy/apisim.hpp"
#include "hookdecoy/rng.hpp"

namespace hookdecoy {

enum class DeceptionMode : std::uint8_t { kDecoyInjection, kInputPerturbation };
enum class PerturbOp : std::uint8_t {
  kCaseFlipEvery3rd,
  kRandomAdjacentSwap,
  kBenignExtraKey,
  kReportDelay,
};
enum class HookRegistrationPolicy : std::uint8_t { kBlock, kOverride };

const char* to_string(DeceptionMode m);
const char* to_string(PerturbOp op);
const char* to_string(HookRegistrationPolicy p);
std::optional<DeceptionMode> deception_mode_from_string(std::string_view s);
std::optional<PerturbOp> perturb_op_from_string(std::string_view s);
std::optional<HookRegistrationPolicy> hook_policy_from_string(std::string_view s);

struct DeceptionPolicy {
  DeceptionMode mode = DeceptionMode::kDecoyInjection;
  /// Decoy keystrokes; built from decoy_text when left empty.
  std::vector<KeyEvent> decoy_script;
  std::string decoy_text = "hrSmith2025!\t\n";
  std::string decoy_clipboard = "hrSmith2025!";
  std::map<std::string, std::string> decoy_fields = {{"username", "hrsmith"},
                                                     {"password", "hrSmith2025!"}};
  std::vector<std::string> sensitive_fields = {"username", "password"};
  double masking_ratio = 0.0;
  std::vector<PerturbOp> perturb_ops = {PerturbOp::kCaseFlipEvery3rd};
  std::uint64_t rng_seed = 0;
  /// Quiet ticks required before a finished decoy session may trigger again.
  Tick rearm_gap = 20;
  HookRegistrationPolicy hook_registration = HookRegistrationPolicy::kOverride;
  bool spoof_environment = true;
  bool decoy_consistent_modifiers = false;

  /// Throws kConfig on a ratio outside [0, 1], an empty decoy in decoy mode or
  /// no ops in perturbation mode.
  void validate() const;
  std::vector<KeyEvent> effective_decoy_script() const;
};

// Pure text operations, exposed for tests.
char flip_case(char c);
/// Flips the case of every third character (indices 2, 5, 8, ...).
std::string case_flip_every_third(std::string s);

/// Decoy playback state shared by every channel: armed until true activity
/// appears, then plays, then cools down until a quiet gap has passed.
class DecoySession {
 public:
  enum class State : std::uint8_t { kArmed, kPlaying, kCooldown };

  explicit DecoySession(Tick rearm_gap = 20) : gap_(rearm_gap) {}

  /// Records activity at now. Returns true when a new session starts.
  bool observe(Tick now, bool active);
  void finish() { state_ = State::kCooldown; }
  State state() const { return state_; }
  std::size_t cursor = 0;

 private:
  Tick gap_;
  State state_ = State::kArmed;
  std::optional<Tick> last_active_;
};

/// Per-character perturbation for message and hook streams.
class CharPerturber {
 public:
  /// Feeds one true character; returns what the caller should observe now.
  std::vector<char> feed(char c, std::optional<PerturbOp> op, Rng& op_rng);
  std::size_t ordinal() const { return ordinal_; }

 private:
  std::size_t ordinal_ = 0;
  std::optional<char> held_;
  std::optional<char> delayed_;
};

/// The deception engine: detour handlers for every hooked API. Only flagged
/// callers are deceived; everyone else gets native semantics.
class DeceptionEngine {
 public:
  using FlagPredicate = std::function<bool(ActorId)>;

  DeceptionEngine(SimProcess& process, NativeApi& native, DeceptionPolicy policy,
                  FlagPredicate flagged = is_adversary);

  /// Registers a handler for every API in api_names().
  void register_handlers(CallGate& gate);
  ApiValue handle(CallContext& ctx, const ApiArgs& args);

  const DeceptionPolicy& policy() const { return policy_; }
  std::uint64_t units() const { return units_; }
  std::uint64_t modified_units() const { return modified_units_; }

  /// Text op used for clipboard and form-field values.
  std::string apply_text_op(const std::string& s, PerturbOp op, const std::string& previous);

 private:
  struct PollState {
    bool started = false;
    Tick last_tick = 0;
    std::uint32_t last_vk = 0;
    KeyboardState view;
    KeyboardState decoy_view;
    KeyboardState prev_truth;
    bool modified = false;
    bool delay_pending = false;
    std::size_t onset_ordinal = 0;
    std::optional<std::vector<std::uint32_t>> held;
    bool held_shift = false;
    bool release_armed = false;
    DecoySession session;
  };
  struct MessageState {
    DecoySession session;
    std::deque<Message> out;
    CharPerturber perturber;
  };
  struct ClipboardState {
    std::string last_truth;
    std::string previous_truth;
  };

  /// Draws the masking decision and op for one deception unit and logs it.
  std::optional<PerturbOp> decide(ActorId caller, const char* channel);

  /// Calls the original function on the caller's behalf.
  ApiValue forward(CallContext& ctx, const ApiArgs& args);
  ApiValue poll_key(CallContext& ctx, const ApiArgs& args);
  void begin_sweep(ActorId caller, PollState& st, Tick now);
  ApiValue message(CallContext& ctx, const ApiArgs& args);
  ApiValue register_hook(CallContext& ctx, const ApiArgs& args);
  ApiValue clipboard(CallContext& ctx, const ApiArgs& args);
  ApiValue network(CallContext& ctx, const ApiArgs& args);
  ApiValue spoof(CallContext& ctx, const ApiArgs& args);
  KeyboardProc wrap_keyboard_proc(ActorId owner, KeyboardProc proc);

  SimProcess& process_;
  NativeApi& native_;
  DeceptionPolicy policy_;
  FlagPredicate flagged_;
  Rng masking_rng_;
  Rng op_rng_;
  std::vector<KeyEvent> decoy_script_;
  std::vector<std::vector<KeyEvent>> decoy_steps_;
  std::vector<Message> decoy_messages_;
  std::map<ActorId, PollState> poll_;
  std::map<ActorId, MessageState> messages_;
  std::map<ActorId, ClipboardState> clipboard_;
  std::uint64_t units_ = 0;
  std::uint64_t modified_units_ = 0;
};

}  // namespace hookdecoy
