#include "hookdecoy/deception.hpp"

#include <algorithm>
#include <cctype>
#include <memory>

namespace hookdecoy {

namespace {

constexpr const char* kModeNames[] = {"DECOY_INJECTION", "INPUT_PERTURBATION"};
constexpr const char* kOpNames[] = {"CASE_FLIP_EVERY_3RD", "RANDOM_ADJACENT_SWAP",
                                    "BENIGN_EXTRA_KEY", "REPORT_DELAY"};
constexpr const char* kHookPolicyNames[] = {"BLOCK", "OVERRIDE"};

template <typename E, std::size_t N>
std::optional<E> from_names(const char* const (&names)[N], std::string_view s) {
  for (std::size_t i = 0; i < N; ++i)
    if (s == names[i]) return static_cast<E>(i);
  return std::nullopt;
}

char random_letter(Rng& rng) { return static_cast<char>('a' + rng.below(26)); }

}  // namespace

const char* to_string(DeceptionMode m) { return kModeNames[static_cast<int>(m)]; }
const char* to_string(PerturbOp op) { return kOpNames[static_cast<int>(op)]; }
const char* to_string(HookRegistrationPolicy p) { return kHookPolicyNames[static_cast<int>(p)]; }

std::optional<DeceptionMode> deception_mode_from_string(std::string_view s) {
  return from_names<DeceptionMode>(kModeNames, s);
}
std::optional<PerturbOp> perturb_op_from_string(std::string_view s) {
  return from_names<PerturbOp>(kOpNames, s);
}
std::optional<HookRegistrationPolicy> hook_policy_from_string(std::string_view s) {
  return from_names<HookRegistrationPolicy>(kHookPolicyNames, s);
}

void DeceptionPolicy::validate() const {
  if (!(masking_ratio >= 0.0 && masking_ratio <= 1.0))
    throw SimError(ErrorCode::kConfig, "masking_ratio must be within [0, 1]");
  if (mode == DeceptionMode::kDecoyInjection && decoy_script.empty() && decoy_text.empty())
    throw SimError(ErrorCode::kConfig, "decoy mode needs a nonempty decoy script");
  if (mode == DeceptionMode::kInputPerturbation && perturb_ops.empty())
    throw SimError(ErrorCode::kConfig, "perturbation mode needs at least one perturb op");
  if (rearm_gap < 1) throw SimError(ErrorCode::kConfig, "rearm_gap must be >= 1");
}

std::vector<KeyEvent> DeceptionPolicy::effective_decoy_script() const {
  if (!decoy_script.empty()) return decoy_script;
  return keystrokes_for_text(decoy_text, 0, 2);
}

char flip_case(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (std::islower(u)) return static_cast<char>(std::toupper(u));
  if (std::isupper(u)) return static_cast<char>(std::tolower(u));
  return c;
}

std::string case_flip_every_third(std::string s) {
  for (std::size_t i = 2; i < s.size(); i += 3) s[i] = flip_case(s[i]);
  return s;
}

// ---------------------------------------------------------------------------

bool DecoySession::observe(Tick now, bool active) {
  if (state_ == State::kCooldown && (!last_active_ || now - *last_active_ >= gap_))
    state_ = State::kArmed;
  if (active) last_active_ = now;
  if (state_ == State::kArmed && active) {
    state_ = State::kPlaying;
    cursor = 0;
    return true;
  }
  return false;
}

std::vector<char> CharPerturber::feed(char c, std::optional<PerturbOp> op, Rng& op_rng) {
  std::vector<char> out;
  if (delayed_) {
    out.push_back(*delayed_);
    delayed_.reset();
  }
  const std::size_t ord = ordinal_++;
  const auto release_held = [&] {
    if (held_) {
      out.push_back(*held_);
      held_.reset();
    }
  };
  if (!op) {
    out.push_back(c);
    release_held();
    return out;
  }
  switch (*op) {
    case PerturbOp::kCaseFlipEvery3rd:
      out.push_back(ord % 3 == 2 ? flip_case(c) : c);
      release_held();
      break;
    case PerturbOp::kRandomAdjacentSwap:
      if (held_) {
        out.push_back(c);
        release_held();
      } else {
        held_ = c;
      }
      break;
    case PerturbOp::kBenignExtraKey:
      out.push_back(c);
      out.push_back(random_letter(op_rng));
      release_held();
      break;
    case PerturbOp::kReportDelay:
      if (held_) {
        out.push_back(c);
        release_held();
      } else {
        delayed_ = c;
      }
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------

DeceptionEngine::DeceptionEngine(SimProcess& process, NativeApi& native, DeceptionPolicy policy,
                                 FlagPredicate flagged)
    : process_(process),
      native_(native),
      policy_(std::move(policy)),
      flagged_(std::move(flagged)),
      masking_rng_(Rng::derive(policy_.rng_seed, kStreamMasking)),
      op_rng_(Rng::derive(policy_.rng_seed, kStreamPerturbOp)) {
  policy_.validate();
  decoy_script_ = policy_.effective_decoy_script();
  for (const KeyEvent& k : decoy_script_) {
    if (decoy_steps_.empty() || decoy_steps_.back().front().tick != k.tick)
      decoy_steps_.emplace_back();
    decoy_steps_.back().push_back(k);
    if (k.kind == KeyEventKind::kDown) {
      decoy_messages_.push_back({kWmKeyDown, k.vk, 0});
      if (k.ch) decoy_messages_.push_back({kWmChar, k.vk, *k.ch});
    } else {
      decoy_messages_.push_back({kWmKeyUp, k.vk, 0});
    }
  }
}

void DeceptionEngine::register_handlers(CallGate& gate) {
  for (const auto& api : api_names())
    gate.register_handler(handler_id_for(api),
                          [this](CallContext& ctx, const ApiArgs& args) { return handle(ctx, args); });
}

std::optional<PerturbOp> DeceptionEngine::decide(ActorId caller, const char* channel) {
  // Separate streams: the masking draw sequence depends only on the ratio, so
  // selected units are nested as the ratio grows.
  const bool selected = masking_rng_.unit() < policy_.masking_ratio;
  std::optional<PerturbOp> op;
  if (selected) op = policy_.perturb_ops[op_rng_.below(policy_.perturb_ops.size())];
  ++units_;
  if (selected) ++modified_units_;
  process_.emit({.actor = caller,
                 .kind = EventKind::kDecision,
                 .value = selected ? 1 : 0,
                 .aux = op ? static_cast<std::int64_t>(*op) + 1 : 0,
                 .name = channel});
  return op;
}

ApiValue DeceptionEngine::forward(CallContext& ctx, const ApiArgs& args) {
  ctx.forwarded = true;
  return native_.invoke(ctx.api, ctx.caller, args);
}

ApiValue DeceptionEngine::handle(CallContext& ctx, const ApiArgs& args) {
  if (!flagged_(ctx.caller)) return forward(ctx, args);
  const std::string& api = ctx.api;
  if (api == "GetAsyncKeyState") return poll_key(ctx, args);
  if (api == "GetKeyboardState" && policy_.mode == DeceptionMode::kDecoyInjection &&
      policy_.decoy_consistent_modifiers) {
    ApiValue v = forward(ctx, args);
    const auto& view = poll_[ctx.caller].view;
    for (std::size_t vk = 0; vk < 256; ++vk)
      v.data[vk] = static_cast<Byte>((v.data[vk] & 0x01) | (view.down[vk] ? 0x80 : 0));
    ctx.modified = true;
    return v;
  }
  if (api == "PeekMessage" || api == "GetMessage") return message(ctx, args);
  if (api == "SetWindowsHookEx") return register_hook(ctx, args);
  if (api == "GetClipboardData") return clipboard(ctx, args);
  if (api == "HttpSendRequest" || api == "InternetWriteFile" || api == "WSASend")
    return network(ctx, args);
  if (api == "IsDebuggerPresent" || api == "GetTickCount" || api == "NtQueryInformationProcess")
    return spoof(ctx, args);
  // Window titles, modifier queries and clipboard open/close pass through.
  return forward(ctx, args);
}

// ---------------------------------------------------------------------------
// Polling

void DeceptionEngine::begin_sweep(ActorId caller, PollState& st, Tick now) {
  const KeyboardState truth = native_.truth().key_state(now);
  st.modified = false;
  if (policy_.mode == DeceptionMode::kDecoyInjection) {
    if (st.session.observe(now, native_.truth().key_activity_at(now))) st.decoy_view = {};
    if (st.session.state() == DecoySession::State::kPlaying) {
      for (const KeyEvent& k : decoy_steps_[st.session.cursor])
        st.decoy_view.down[k.vk & 0xFF] = k.kind == KeyEventKind::kDown;
      if (++st.session.cursor == decoy_steps_.size()) st.session.finish();
      st.modified = true;
    } else {
      st.decoy_view = {};
    }
    // Toggle state is not part of the decoy; it stays truthful.
    st.decoy_view.caps_toggled = truth.caps_toggled;
    st.view = st.decoy_view;
    st.prev_truth = truth;
    return;
  }

  std::vector<std::uint32_t> onsets;
  for (std::uint32_t vk = kVkFirst; vk <= kVkLast; ++vk)
    if (truth.down[vk] && !st.prev_truth.down[vk] && !is_modifier_vk(vk)) onsets.push_back(vk);
  const std::size_t first_ordinal = st.onset_ordinal;
  st.onset_ordinal += onsets.size();

  const auto op = decide(caller, "POLLING");
  st.modified = op.has_value();
  KeyboardState view = st.delay_pending ? st.prev_truth : truth;
  st.delay_pending = false;

  if (st.held && st.release_armed) {
    for (std::uint32_t vk : *st.held) view.down[vk] = true;
    view.down[kVkShift] = st.held_shift;
    st.held.reset();
    st.release_armed = false;
  } else if (st.held && !onsets.empty()) {
    st.release_armed = true;  // the next key went out first; release on the following sweep
  }

  if (op) {
    switch (*op) {
      case PerturbOp::kCaseFlipEvery3rd:
        for (std::size_t i = 0; i < onsets.size(); ++i)
          if ((first_ordinal + i) % 3 == 2 && onsets[i] >= 0x41 && onsets[i] <= 0x5A)
            view.down[kVkShift] = !truth.down[kVkShift];
        break;
      case PerturbOp::kRandomAdjacentSwap:
        if (!st.held && !onsets.empty()) {
          st.held = onsets;
          st.held_shift = truth.down[kVkShift];
          for (std::uint32_t vk : onsets) view.down[vk] = false;
        }
        break;
      case PerturbOp::kBenignExtraKey:
        view.down[0x41 + op_rng_.below(26)] = true;
        break;
      case PerturbOp::kReportDelay:
        view = st.prev_truth;
        st.delay_pending = true;
        break;
    }
  }
  st.view = view;
  st.prev_truth = truth;
}

ApiValue DeceptionEngine::poll_key(CallContext& ctx, const ApiArgs& args) {
  auto [it, fresh] = poll_.try_emplace(ctx.caller);
  PollState& st = it->second;
  if (fresh) st.session = DecoySession(policy_.rearm_gap);
  const Tick now = process_.now();
  const auto vk = static_cast<std::uint32_t>(args.arg & 0xFF);
  if (!st.started || now != st.last_tick || vk <= st.last_vk) begin_sweep(ctx.caller, st, now);
  st.started = true;
  st.last_tick = now;
  st.last_vk = vk;
  ctx.modified = st.modified;
  ApiValue v;
  v.num = st.view.down[vk] ? 0x8000 : 0;
  return v;
}

// ---------------------------------------------------------------------------
// Message queue

ApiValue DeceptionEngine::message(CallContext& ctx, const ApiArgs& args) {
  auto [it, fresh] = messages_.try_emplace(ctx.caller);
  MessageState& st = it->second;
  if (fresh) st.session = DecoySession(policy_.rearm_gap);
  TruthView& truth = native_.truth();
  const Tick now = process_.now();
  const bool remove = ctx.api == "GetMessage" || args.arg != 0;
  ApiValue v;

  if (policy_.mode == DeceptionMode::kDecoyInjection) {
    const auto pending = truth.next_message_tick(ctx.caller);
    const bool active = pending && *pending <= now;
    st.session.observe(now, active);
    // True messages never reach a flagged caller.
    while (truth.next_message(ctx.caller, now, true)) {
    }
    if (st.session.state() == DecoySession::State::kPlaying && !decoy_messages_.empty()) {
      v.msg = decoy_messages_[st.session.cursor];
      if (remove && ++st.session.cursor == decoy_messages_.size()) st.session.finish();
      ctx.modified = true;
    }
    v.num = v.msg ? 1 : 0;
    return v;
  }

  while (st.out.empty()) {
    const auto m = truth.next_message(ctx.caller, now, true);
    if (!m) break;
    if (m->id != kWmChar) {
      st.out.push_back(*m);
      continue;
    }
    const auto op = decide(ctx.caller, "MSG_QUEUE");
    if (op) ctx.modified = true;
    for (char c : st.perturber.feed(m->ch, op, op_rng_)) {
      const auto ks = keystroke_for_char(c);
      st.out.push_back({kWmChar, ks ? ks->vk : m->vk, c});
    }
  }
  if (!st.out.empty()) {
    v.msg = st.out.front();
    if (remove) st.out.pop_front();
  }
  v.num = v.msg ? 1 : 0;
  return v;
}

// ---------------------------------------------------------------------------
// Keyboard hook registration

KeyboardProc DeceptionEngine::wrap_keyboard_proc(ActorId owner, KeyboardProc proc) {
  struct HookState {
    DecoySession session;
    CharPerturber perturber;
  };
  auto state = std::make_shared<HookState>();
  state->session = DecoySession(policy_.rearm_gap);
  return [this, owner, proc = std::move(proc), state](const KeyEvent& e) {
    const Tick now = process_.now();
    if (policy_.mode == DeceptionMode::kDecoyInjection) {
      if (state->session.observe(now, true)) {
        for (KeyEvent d : decoy_script_) {
          d.tick = now;
          proc(d);
        }
        state->session.finish();
      }
      return;
    }
    if (e.kind != KeyEventKind::kDown || !e.ch) {
      proc(e);
      return;
    }
    const auto op = decide(owner, "OS_HOOK");
    for (char c : state->perturber.feed(*e.ch, op, op_rng_)) {
      KeyEvent out = e;
      const auto ks = keystroke_for_char(c);
      if (ks) out.vk = ks->vk;
      out.ch = c;
      proc(out);
    }
  };
}

ApiValue DeceptionEngine::register_hook(CallContext& ctx, const ApiArgs& args) {
  ctx.modified = true;
  if (policy_.hook_registration == HookRegistrationPolicy::kBlock) return ApiValue{};
  ApiArgs wrapped = args;
  if (args.proc) wrapped.proc = wrap_keyboard_proc(ctx.caller, args.proc);
  return forward(ctx, wrapped);
}

// ---------------------------------------------------------------------------
// Clipboard, network, environment

std::string DeceptionEngine::apply_text_op(const std::string& s, PerturbOp op,
                                           const std::string& previous) {
  std::string out = s;
  switch (op) {
    case PerturbOp::kCaseFlipEvery3rd:
      return case_flip_every_third(out);
    case PerturbOp::kRandomAdjacentSwap:
      if (out.size() >= 2) {
        const std::size_t i = op_rng_.below(out.size() - 1);
        std::swap(out[i], out[i + 1]);
      }
      return out;
    case PerturbOp::kBenignExtraKey:
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(op_rng_.below(out.size() + 1)),
                 random_letter(op_rng_));
      return out;
    case PerturbOp::kReportDelay:
      return previous;
  }
  return out;
}

ApiValue DeceptionEngine::clipboard(CallContext& ctx, const ApiArgs& args) {
  ApiValue v = forward(ctx, args);
  if (v.text.empty()) return v;
  ClipboardState& st = clipboard_[ctx.caller];
  if (v.text != st.last_truth) {
    st.previous_truth = st.last_truth;
    st.last_truth = v.text;
  }
  if (policy_.mode == DeceptionMode::kDecoyInjection) {
    v.text = policy_.decoy_clipboard;
    ctx.modified = true;
  } else if (const auto op = decide(ctx.caller, "CLIPBOARD")) {
    v.text = apply_text_op(v.text, *op, st.previous_truth);
    ctx.modified = true;
  }
  v.num = static_cast<std::int64_t>(v.text.size());
  return v;
}

ApiValue DeceptionEngine::network(CallContext& ctx, const ApiArgs& args) {
  FormFields fields = parse_form(args.text);
  const auto is_sensitive = [&](const std::string& k) {
    return std::find(policy_.sensitive_fields.begin(), policy_.sensitive_fields.end(), k) !=
           policy_.sensitive_fields.end();
  };
  if (std::none_of(fields.begin(), fields.end(), [&](const auto& f) { return is_sensitive(f.first); }))
    return forward(ctx, args);

  std::optional<PerturbOp> op;
  if (policy_.mode == DeceptionMode::kInputPerturbation) {
    op = decide(ctx.caller, "NETWORK");
    if (!op) return forward(ctx, args);
  }
  for (auto& [k, value] : fields) {
    if (!is_sensitive(k)) continue;
    if (op) {
      value = apply_text_op(value, *op, value);
    } else {
      auto it = policy_.decoy_fields.find(k);
      value = it != policy_.decoy_fields.end() ? it->second : "decoy";
    }
  }
  ctx.modified = true;
  ApiArgs changed = args;
  changed.text = format_form(fields);
  return forward(ctx, changed);
}

ApiValue DeceptionEngine::spoof(CallContext& ctx, const ApiArgs& args) {
  if (!policy_.spoof_environment) return forward(ctx, args);
  ctx.modified = true;
  ApiValue v;
  if (ctx.api == "GetTickCount") v.num = native_.clean_tick_count();
  // IsDebuggerPresent and every NtQueryInformationProcess class report a clean host.
  return v;
}

}  // namespace hookdecoy
