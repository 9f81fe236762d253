#include "hookdecoy/loader.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "hookdecoy/fnv.hpp"
#include "json.hpp"

#ifndef HOOKDECOY_DATA_DIR
#define HOOKDECOY_DATA_DIR "data"
#endif

namespace hookdecoy {

namespace {
constexpr Byte kNop = 0x90;
constexpr Byte kNativeGate = 0xF4;
constexpr Byte kFiller = 0xCC;
}  // namespace

const char* to_string(ModuleOrigin o) { return o == ModuleOrigin::kSystem ? "SYSTEM" : "CLONE"; }

TemplateManifest TemplateManifest::parse(std::string_view json_text) {
  TemplateManifest m;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw SimError(ErrorCode::kConfig, std::string("template manifest: ") + e.what());
  }
  if (j.value("prologue_len", kPrologueLen) != kPrologueLen)
    throw SimError(ErrorCode::kConfig, "template manifest: prologue_len must be 16");
  m.export_stride_ = j.value("export_stride", 32u);
  if (m.export_stride_ < kPrologueLen + 1)
    throw SimError(ErrorCode::kConfig, "template manifest: export_stride too small");
  for (const auto& jt : j.at("templates")) {
    LibraryTemplate t;
    t.name = jt.at("name").get<std::string>();
    t.code_size = jt.value("code_size", kPageSize);
    t.unguardable_pages = jt.value("unguardable_pages", std::vector<std::uint32_t>{});
    std::set<std::string> names;
    for (const auto& je : jt.at("exports")) {
      ExportEntry e{je.at("name").get<std::string>(), je.at("offset").get<std::uint32_t>()};
      if (!names.insert(e.name).second)
        throw SimError(ErrorCode::kConfig, "duplicate export " + e.name + " in " + t.name);
      if (e.offset + m.export_stride_ > t.code_size)
        throw SimError(ErrorCode::kConfig, "export " + e.name + " outside code region");
      t.exports.push_back(std::move(e));
    }
    m.templates_.push_back(std::move(t));
  }
  return m;
}

TemplateManifest TemplateManifest::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimError(ErrorCode::kIo, "cannot open template manifest " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TemplateManifest::default_path() {
  return std::string(HOOKDECOY_DATA_DIR) + "/templates.json";
}

const LibraryTemplate* TemplateManifest::find(std::string_view name) const {
  for (const auto& t : templates_)
    if (t.name == name) return &t;
  return nullptr;
}

Bytes TemplateManifest::clean_code(const LibraryTemplate& t) const {
  Bytes code(t.code_size, kFiller);
  for (const auto& e : t.exports) {
    std::fill_n(code.begin() + e.offset, e.prologue_len, kNop);
    code[e.offset + e.prologue_len] = kNativeGate;
  }
  return code;
}

Bytes TemplateManifest::clean_prologue(const LibraryTemplate& t, const ExportEntry& e) const {
  (void)t;
  return Bytes(e.prologue_len, kNop);
}

const ExportEntry* ModuleImage::find_export(std::string_view export_name) const {
  for (const auto& e : exports)
    if (e.name == export_name) return &e;
  return nullptr;
}

bool ModuleImage::page_guardable(Address a) const {
  const std::uint32_t index = (page_base(a) - base) / kPageSize;
  return std::find(unguardable_pages.begin(), unguardable_pages.end(), index) ==
         unguardable_pages.end();
}

std::optional<Address> ImportTable::lookup(const std::string& module,
                                           const std::string& export_name) const {
  auto it = slots.find({module, export_name});
  if (it == slots.end()) return std::nullopt;
  return it->second;
}

Loader::Loader(SimProcess& process, TemplateManifest manifest)
    : process_(process), manifest_(std::move(manifest)) {}

const ModuleImage& Loader::load_module(const std::string& template_name,
                                       const std::string& load_name, ActorId actor) {
  const LibraryTemplate* t = manifest_.find(template_name);
  if (!t) throw SimError(ErrorCode::kUnknownTemplate, template_name);
  if (find(load_name)) throw SimError(ErrorCode::kBadArgument, "module name in use: " + load_name);

  ModuleImage m;
  m.name = load_name;
  m.template_name = t->name;
  m.code_size = t->code_size;
  m.exports = t->exports;
  m.unguardable_pages = t->unguardable_pages;
  if (const ModuleImage* first = system_module(t->name)) {
    m.origin = ModuleOrigin::kClone;
    m.clone_of = first->name;
  }

  // Map writable, copy the clean template, then seal as code.
  m.base = process_.alloc_region(t->code_size, Protection::kReadWrite, kSystemActor);
  const Bytes code = manifest_.clean_code(*t);
  process_.write_bytes(kSystemActor, m.base, code);
  process_.protect(kSystemActor, m.base, t->code_size, Protection::kExecuteRead);

  modules_.push_back(std::move(m));
  const ModuleImage& loaded = modules_.back();
  process_.emit({.actor = actor,
                 .kind = EventKind::kLoad,
                 .addr = loaded.base,
                 .len = loaded.code_size,
                 .value = static_cast<std::int64_t>(loaded.origin),
                 .name = loaded.name,
                 .text = loaded.template_name});
  for (const auto& handler : subscribers_) handler(loaded);
  return loaded;
}

Address Loader::get_proc_address(const ModuleImage& m, std::string_view export_name) const {
  const ExportEntry* e = m.find_export(export_name);
  if (!e) throw SimError(ErrorCode::kNotExported, std::string(export_name) + " in " + m.name);
  return m.base + e->offset;
}

SubscriptionId Loader::subscribe_load_events(LoadHandler handler) {
  subscribers_.push_back(std::move(handler));
  return static_cast<SubscriptionId>(subscribers_.size());
}

std::uint64_t Loader::export_signature(const ModuleImage& m) const {
  const LibraryTemplate* t = manifest_.find(m.template_name);
  std::vector<const ExportEntry*> sorted;
  for (const auto& e : m.exports) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const ExportEntry* a, const ExportEntry* b) { return a->name < b->name; });
  Fnv1a h;
  for (const ExportEntry* e : sorted) {
    h.add(e->name).add(std::uint8_t{0});
    h.add_u64(fnv1a64(manifest_.clean_prologue(*t, *e)));
  }
  return h.digest();
}

const ModuleImage* Loader::find(std::string_view load_name) const {
  for (const auto& m : modules_)
    if (m.name == load_name) return &m;
  return nullptr;
}

const ModuleImage* Loader::module_at(Address a) const {
  for (const auto& m : modules_)
    if (m.contains(a)) return &m;
  return nullptr;
}

const ExportEntry* Loader::export_at(const ModuleImage& m, Address a) const {
  if (!m.contains(a)) return nullptr;
  const std::uint32_t off = a - m.base;
  for (const auto& e : m.exports)
    if (off >= e.offset && off < e.offset + manifest_.export_stride()) return &e;
  return nullptr;
}

const ModuleImage* Loader::system_module(std::string_view template_name) const {
  for (const auto& m : modules_)
    if (m.template_name == template_name && m.origin == ModuleOrigin::kSystem) return &m;
  return nullptr;
}

}  // namespace hookdecoy
