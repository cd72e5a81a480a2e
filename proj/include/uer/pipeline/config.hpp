#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uer::pipeline {

using Section = std::map<std::string, std::string>;

// Flat `key = value` text with `[encoder]` (repeatable, in stack order) and
// `[subencoder]` section headers. `#` starts a comment line.
struct ConfigFile {
  Section root;
  std::vector<Section> encoders;
  std::optional<Section> subencoder;

  static ConfigFile parse(std::string_view text);
  static ConfigFile load(const std::filesystem::path& path);
  std::string dump() const;
};

// Typed lookups; ConfigError names the key on a malformed value.
std::string get_string(const Section& s, const std::string& key, const std::string& fallback);
std::size_t get_size(const Section& s, const std::string& key, std::size_t fallback);
std::uint64_t get_u64(const Section& s, const std::string& key, std::uint64_t fallback);
double get_double(const Section& s, const std::string& key, double fallback);
bool get_bool(const Section& s, const std::string& key, bool fallback);

// ConfigError on any key outside `allowed`.
void check_keys(const Section& s, const std::vector<std::string>& allowed, std::string_view where);

std::string format_double(double v);

}  // namespace uer::pipeline
