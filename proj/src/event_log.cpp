#include <array>
#include <cstdio>
#include <sstream>

#include "hookdecoy/fnv.hpp"
#include "hookdecoy/simcore.hpp"
#include "json.hpp"

namespace hookdecoy {

namespace {

constexpr std::array kEventNames = {
    "ALLOC",  "PROTECT", "WRITE",   "READ",      "FAULT",           "GUARD_ARM",  "LOAD",
    "HOOK_INSTALL", "HOOK_REMOVE", "API_CALL", "DECISION", "TAMPER", "WARNING", "KEYLOG",
    "TRUTH", "TERMINATE", "SCENARIO_WARNING", "NET_SEND", "TRUTH_LEAK", "DEFENSE_ACTIVE",
    "SCENARIO", "THREAD_START", "ATTACK",
};
static_assert(kEventNames.size() == static_cast<std::size_t>(EventKind::kAttack) + 1);

}  // namespace

const char* to_string(EventKind k) { return kEventNames.at(static_cast<std::size_t>(k)); }

std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i)
    if (s == kEventNames[i]) return static_cast<EventKind>(i);
  return std::nullopt;
}

namespace {

void append_string(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned char>(c));
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

template <typename T>
void append_field(std::string& out, const char* key, T v) {
  out += ",\"";
  out += key;
  out += "\":";
  out += std::to_string(v);
}

void append_text(std::string& out, const char* key, const std::string& v) {
  out += ",\"";
  out += key;
  out += "\":";
  append_string(out, v);
}

}  // namespace

// Written by hand (the log is large and hashed); zero-valued fields are
// omitted and parse_event restores them as defaults.
std::string serialize_event(const Event& e) {
  std::string out;
  out.reserve(96);
  out += "{\"t\":";
  out += std::to_string(e.tick);
  append_field(out, "a", to_underlying(e.actor));
  out += ",\"k\":\"";
  out += to_string(e.kind);
  out += '"';
  if (e.addr) append_field(out, "addr", e.addr);
  if (e.len) append_field(out, "len", e.len);
  if (e.value) append_field(out, "v", e.value);
  if (e.aux) append_field(out, "x", e.aux);
  if (!e.name.empty()) append_text(out, "n", e.name);
  if (!e.text.empty()) append_text(out, "s", e.text);
  if (!e.note.empty()) append_text(out, "o", e.note);
  out += '}';
  return out;
}

Event parse_event(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Event e;
  e.tick = j.at("t").get<Tick>();
  e.actor = ActorId{j.at("a").get<std::uint32_t>()};
  const auto kind = event_kind_from_string(j.at("k").get<std::string>());
  if (!kind) throw SimError(ErrorCode::kConfig, "unknown event kind in log");
  e.kind = *kind;
  e.addr = j.value("addr", Address{0});
  e.len = j.value("len", std::uint32_t{0});
  e.value = j.value("v", std::int64_t{0});
  e.aux = j.value("x", std::int64_t{0});
  e.name = j.value("n", std::string{});
  e.text = j.value("s", std::string{});
  e.note = j.value("o", std::string{});
  return e;
}

std::string EventLog::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

EventLog EventLog::from_jsonl(std::string_view text) {
  EventLog log;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    if (nl > pos) log.append(parse_event(text.substr(pos, nl - pos)));
    pos = nl + 1;
  }
  return log;
}

std::uint64_t EventLog::digest() const {
  Fnv1a h;
  for (const auto& e : entries_) {
    h.add(serialize_event(e));
    h.add('\n');
  }
  return h.digest();
}

}  // namespace hookdecoy
