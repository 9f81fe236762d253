#include "hookdecoy/keyboard.hpp"

#include <cctype>
#include <cstring>

namespace hookdecoy {

namespace {

// Unshifted and shifted characters of the OEM and digit keys.
struct KeyChars {
  std::uint32_t vk;
  char plain;
  char shifted;
};

constexpr KeyChars kSymbolKeys[] = {
    {0x30, '0', ')'}, {0x31, '1', '!'}, {0x32, '2', '@'}, {0x33, '3', '#'},
    {0x34, '4', '$'}, {0x35, '5', '%'}, {0x36, '6', '^'}, {0x37, '7', '&'},
    {0x38, '8', '*'}, {0x39, '9', '('}, {0xBA, ';', ':'}, {0xBB, '=', '+'},
    {0xBC, ',', '<'}, {0xBD, '-', '_'}, {0xBE, '.', '>'}, {0xBF, '/', '?'},
    {0xC0, '`', '~'}, {0xDB, '[', '{'}, {0xDC, '\\', '|'}, {0xDD, ']', '}'},
    {0xDE, '\'', '"'},
};

}  // namespace

bool is_modifier_vk(std::uint32_t vk) {
  return vk == kVkShift || vk == kVkControl || vk == kVkMenu || vk == kVkCapital ||
         (vk >= 0xA0 && vk <= 0xA5) || vk == 0x5B || vk == 0x5C;
}

std::optional<KeyStroke> keystroke_for_char(char c) {
  if (c >= 'a' && c <= 'z') return KeyStroke{static_cast<std::uint32_t>(c - 'a' + 0x41), false};
  if (c >= 'A' && c <= 'Z') return KeyStroke{static_cast<std::uint32_t>(c - 'A' + 0x41), true};
  if (c == ' ') return KeyStroke{kVkSpace, false};
  if (c == '\t') return KeyStroke{kVkTab, false};
  if (c == '\n') return KeyStroke{kVkReturn, false};
  for (const auto& k : kSymbolKeys) {
    if (k.plain == c) return KeyStroke{k.vk, false};
    if (k.shifted == c) return KeyStroke{k.vk, true};
  }
  return std::nullopt;
}

std::optional<char> char_for_vk(std::uint32_t vk, bool shift, bool caps_lock) {
  if (vk >= 0x41 && vk <= 0x5A) {
    const char base = static_cast<char>('a' + (vk - 0x41));
    return (shift != caps_lock) ? static_cast<char>(std::toupper(base)) : base;
  }
  if (vk == kVkSpace) return ' ';
  if (vk == kVkTab) return '\t';
  if (vk == kVkReturn) return '\n';
  for (const auto& k : kSymbolKeys)
    if (k.vk == vk) return shift ? k.shifted : k.plain;
  return std::nullopt;
}

std::vector<KeyEvent> keystrokes_for_text(const std::string& text, Tick start, Tick interval) {
  if (interval < 2) throw SimError(ErrorCode::kBadArgument, "typing interval must be >= 2");
  std::vector<KeyEvent> out;
  Tick t = start;
  for (char c : text) {
    const auto ks = keystroke_for_char(c);
    if (!ks) throw SimError(ErrorCode::kBadArgument, std::string("untypable character '") + c + "'");
    if (ks->shift) out.push_back({t, kVkShift, std::nullopt, KeyEventKind::kDown});
    out.push_back({t, ks->vk, c, KeyEventKind::kDown});
    out.push_back({t + 1, ks->vk, std::nullopt, KeyEventKind::kUp});
    if (ks->shift) out.push_back({t + 1, kVkShift, std::nullopt, KeyEventKind::kUp});
    t += interval;
  }
  return out;
}

std::string typed_text(const std::vector<KeyEvent>& keys) {
  std::string out;
  for (const auto& k : keys)
    if (k.kind == KeyEventKind::kDown && k.ch) out += *k.ch;
  return out;
}

void UserScript::validate() const {
  const auto ordered = [](const auto& list) {
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i].tick < list[i - 1].tick) return false;
    return true;
  };
  if (!ordered(keystrokes)) throw SimError(ErrorCode::kConfig, "keystrokes out of tick order");
  if (!ordered(clipboard_sets)) throw SimError(ErrorCode::kConfig, "clipboard sets out of tick order");
  if (!ordered(form_posts)) throw SimError(ErrorCode::kConfig, "form posts out of tick order");
  if (!ordered(foreground_window)) throw SimError(ErrorCode::kConfig, "window changes out of tick order");
  for (const auto& k : keystrokes)
    if (k.vk < kVkFirst || k.vk > kVkLast) throw SimError(ErrorCode::kConfig, "vk out of range");
}

FormFields parse_form(const std::string& body) {
  FormFields out;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t amp = body.find('&', pos);
    if (amp == std::string::npos) amp = body.size();
    const std::string part = body.substr(pos, amp - pos);
    if (!part.empty()) {
      const std::size_t eq = part.find('=');
      if (eq == std::string::npos)
        out.emplace_back(part, "");
      else
        out.emplace_back(part.substr(0, eq), part.substr(eq + 1));
    }
    pos = amp + 1;
  }
  return out;
}

std::string format_form(const FormFields& fields) {
  std::string out;
  for (const auto& [k, v] : fields) {
    if (!out.empty()) out += '&';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

}  // namespace hookdecoy
