#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hookdecoy/simcore.hpp"

namespace hookdecoy {

struct ExportEntry {
  std::string name;
  std::uint32_t offset = 0;
  std::uint32_t prologue_len = kPrologueLen;
};

struct LibraryTemplate {
  std::string name;
  std::uint32_t code_size = kPageSize;
  std::vector<ExportEntry> exports;
  std::vector<std::uint32_t> unguardable_pages;  // page indices within the code region
};

/// Library templates and their fixed export layout, read from the in-repo
/// manifest (data/templates.json).
class TemplateManifest {
 public:
  static TemplateManifest parse(std::string_view json_text);
  static TemplateManifest load_file(const std::string& path);
  /// Path of the manifest shipped with the source tree.
  static std::string default_path();
  static TemplateManifest load_default() { return load_file(default_path()); }

  const LibraryTemplate* find(std::string_view name) const;
  const std::vector<LibraryTemplate>& templates() const { return templates_; }
  std::uint32_t export_stride() const { return export_stride_; }

  /// Clean code bytes: every export is a 16-byte NOP sled followed by the
  /// native gate; the rest of the region is 0xCC filler.
  Bytes clean_code(const LibraryTemplate& t) const;
  /// The clean 16-byte prologue of one export.
  Bytes clean_prologue(const LibraryTemplate& t, const ExportEntry& e) const;

 private:
  std::uint32_t export_stride_ = 32;
  std::vector<LibraryTemplate> templates_;
};

enum class ModuleOrigin : std::uint8_t { kSystem, kClone };

const char* to_string(ModuleOrigin o);

struct ModuleImage {
  std::string name;
  std::string template_name;
  Address base = 0;
  std::uint32_t code_size = 0;
  std::vector<ExportEntry> exports;
  ModuleOrigin origin = ModuleOrigin::kSystem;
  std::optional<std::string> clone_of;
  std::vector<std::uint32_t> unguardable_pages;

  bool contains(Address a) const { return a >= base && a - base < code_size; }
  const ExportEntry* find_export(std::string_view export_name) const;
  bool page_guardable(Address a) const;
};

/// Per-actor import slots, (module, export) -> address.
struct ImportTable {
  ActorId owner = kSystemActor;
  std::map<std::pair<std::string, std::string>, Address> slots;

  void bind(const std::string& module, const std::string& export_name, Address a) {
    slots[{module, export_name}] = a;
  }
  std::optional<Address> lookup(const std::string& module, const std::string& export_name) const;
};

using LoadHandler = std::function<void(const ModuleImage&)>;
using SubscriptionId = std::uint32_t;

class Loader {
 public:
  Loader(SimProcess& process, TemplateManifest manifest);

  /// Maps a fresh clean copy of a template. Load subscribers run before this
  /// returns.
  const ModuleImage& load_module(const std::string& template_name, const std::string& load_name,
                                 ActorId actor = kSystemActor);

  Address get_proc_address(const ModuleImage& m, std::string_view export_name) const;

  SubscriptionId subscribe_load_events(LoadHandler handler);

  /// Hash of the sorted export names and their clean prologue hashes. Equal
  /// for every instance of a template regardless of base or load name.
  std::uint64_t export_signature(const ModuleImage& m) const;

  const ModuleImage* find(std::string_view load_name) const;
  const ModuleImage* module_at(Address a) const;
  /// Export whose slot [offset, offset + stride) holds address a.
  const ExportEntry* export_at(const ModuleImage& m, Address a) const;
  /// The first-loaded instance of a template.
  const ModuleImage* system_module(std::string_view template_name) const;
  const std::deque<ModuleImage>& modules() const { return modules_; }
  const TemplateManifest& manifest() const { return manifest_; }

 private:
  SimProcess& process_;
  TemplateManifest manifest_;
  std::deque<ModuleImage> modules_;
  std::vector<LoadHandler> subscribers_;
};

}  // namespace hookdecoy
