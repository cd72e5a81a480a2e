#include "uer/pipeline/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uer/error.hpp"

namespace uer::pipeline {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

const std::string* find(const Section& s, const std::string& key) {
  auto it = s.find(key);
  return it == s.end() ? nullptr : &it->second;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

void dump_section(std::ostringstream& out, const Section& s) {
  for (const auto& [k, v] : s) out << k << " = " << v << '\n';
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text) {
  ConfigFile cfg;
  Section* current = &cfg.root;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      std::string_view name = trim(line.substr(1, line.size() - 2));
      if (name == "encoder") {
        current = &cfg.encoders.emplace_back();
      } else if (name == "subencoder") {
        if (cfg.subencoder) throw ConfigError(where + "second [subencoder] section");
        current = &cfg.subencoder.emplace();
      } else {
        throw ConfigError(where + "unknown section [" + std::string(name) + "]");
      }
    } else {
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError(where + "empty key");
      if (current->count(key)) throw ConfigError(where + "duplicate key '" + key + "'");
      (*current)[key] = value;
    }
    if (end == text.size()) break;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ConfigFile::dump() const {
  std::ostringstream out;
  dump_section(out, root);
  if (subencoder) {
    out << "\n[subencoder]\n";
    dump_section(out, *subencoder);
  }
  for (const auto& e : encoders) {
    out << "\n[encoder]\n";
    dump_section(out, e);
  }
  return out.str();
}

std::string get_string(const Section& s, const std::string& key, const std::string& fallback) {
  const std::string* v = find(s, key);
  return v ? *v : fallback;
}

std::uint64_t get_u64(const Section& s, const std::string& key, std::uint64_t fallback) {
  const std::string* v = find(s, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size() || v->empty()) bad(key, *v, "a non-negative integer");
  return out;
}

std::size_t get_size(const Section& s, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(get_u64(s, key, fallback));
}

double get_double(const Section& s, const std::string& key, double fallback) {
  const std::string* v = find(s, key);
  if (!v) return fallback;
  double out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size() || v->empty() || !std::isfinite(out)) {
    bad(key, *v, "a number");
  }
  return out;
}

bool get_bool(const Section& s, const std::string& key, bool fallback) {
  const std::string* v = find(s, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  bad(key, *v, "true or false");
}

void check_keys(const Section& s, const std::vector<std::string>& allowed, std::string_view where) {
  for (const auto& [k, v] : s) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigError("unknown key '" + k + "' in " + std::string(where));
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace uer::pipeline
