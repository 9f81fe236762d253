#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hookdecoy/types.hpp"

namespace hookdecoy {

// Virtual-key codes used by the simulation (US layout).
inline constexpr std::uint32_t kVkBack = 0x08;
inline constexpr std::uint32_t kVkTab = 0x09;
inline constexpr std::uint32_t kVkReturn = 0x0D;
inline constexpr std::uint32_t kVkShift = 0x10;
inline constexpr std::uint32_t kVkControl = 0x11;
inline constexpr std::uint32_t kVkMenu = 0x12;
inline constexpr std::uint32_t kVkCapital = 0x14;
inline constexpr std::uint32_t kVkSpace = 0x20;
inline constexpr std::uint32_t kVkFirst = 0x08;
inline constexpr std::uint32_t kVkLast = 0xFE;

/// Keys whose state is a modifier rather than a character.
bool is_modifier_vk(std::uint32_t vk);

struct KeyStroke {
  std::uint32_t vk = 0;
  bool shift = false;
};

/// How to type c on a US keyboard, or nullopt if it cannot be typed.
std::optional<KeyStroke> keystroke_for_char(char c);

/// The character a key produces, or nullopt for non-character keys.
std::optional<char> char_for_vk(std::uint32_t vk, bool shift, bool caps_lock);

enum class KeyEventKind : std::uint8_t { kDown, kUp };

struct KeyEvent {
  Tick tick = 0;
  std::uint32_t vk = 0;
  std::optional<char> ch;  // set on the DOWN event of a character key
  KeyEventKind kind = KeyEventKind::kDown;

  bool operator==(const KeyEvent&) const = default;
};

/// DOWN/UP events that type text starting at `start`, one character every
/// `interval` ticks. Shifted characters are wrapped in SHIFT down/up on the
/// same ticks. Throws kBadArgument on untypable characters or interval < 2.
std::vector<KeyEvent> keystrokes_for_text(const std::string& text, Tick start, Tick interval);

/// Characters produced by the DOWN events of a keystroke list.
std::string typed_text(const std::vector<KeyEvent>& keys);

struct ClipboardSet {
  Tick tick = 0;
  std::string text;
};

struct FormPost {
  Tick tick = 0;
  std::string url;
  std::string body;
};

struct WindowChange {
  Tick tick = 0;
  std::string title;
};

/// Scripted ground truth for one scenario. All lists are tick-ordered.
struct UserScript {
  std::vector<KeyEvent> keystrokes;
  std::vector<ClipboardSet> clipboard_sets;
  std::vector<FormPost> form_posts;
  std::vector<WindowChange> foreground_window;

  std::string typed_text() const { return hookdecoy::typed_text(keystrokes); }
  /// Throws kConfig if any list is out of tick order or a vk is out of range.
  void validate() const;
};

// ---------------------------------------------------------------------------
// URL-encoded form bodies

using FormFields = std::vector<std::pair<std::string, std::string>>;

FormFields parse_form(const std::string& body);
std::string format_form(const FormFields& fields);

}  // namespace hookdecoy
