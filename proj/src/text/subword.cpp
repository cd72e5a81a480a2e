#include "uer/text/subword.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "uer/error.hpp"

namespace uer::text {

SubwordTable::SubwordTable() {
  for (const std::string& t : kReservedTokens) add_unit(t);
}

int SubwordTable::add_unit(const std::string& unit) {
  auto [it, inserted] = unit_index_.emplace(unit, static_cast<int>(units_.size()));
  if (inserted) units_.push_back(unit);
  return it->second;
}

SubwordTable SubwordTable::build(const Vocabulary& vocab,
                                 std::unordered_map<std::string, std::vector<std::string>> entries) {
  SubwordTable table;
  // Sorted unit inventory keeps ids independent of hash-map iteration order.
  std::set<std::string> inventory;
  for (const auto& [token, units] : entries) {
    if (units.empty()) throw DataError("subword entry for '" + token + "' is empty");
    inventory.insert(units.begin(), units.end());
  }
  for (const std::string& token : vocab.tokens()) {
    if (entries.count(token) ||
        std::find(kReservedTokens.begin(), kReservedTokens.end(), token) != kReservedTokens.end()) {
      continue;
    }
    for (std::string& c : utf8_chars(token)) inventory.insert(std::move(c));
  }
  for (const std::string& unit : inventory) table.add_unit(unit);
  table.entries_ = std::move(entries);

  table.by_vocab_id_.reserve(vocab.size());
  for (const std::string& token : vocab.tokens()) table.by_vocab_id_.push_back(table.decompose(token));
  return table;
}

std::unordered_map<std::string, std::vector<std::string>> SubwordTable::load_entries(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open subword table " + path.string());
  std::unordered_map<std::string, std::vector<std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected <token>\\t<units>");
    }
    auto units = tokenize(std::string_view(line).substr(tab + 1), TokenizeMode::kSpace);
    if (units.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": no subword units");
    }
    entries[line.substr(0, tab)] = std::move(units);
  }
  return entries;
}

std::vector<int> SubwordTable::decompose(std::string_view token) const {
  const std::string key(token);
  for (int i = 0; i < kReservedCount; ++i) {
    if (key == kReservedTokens[static_cast<std::size_t>(i)]) return {i};
  }
  std::vector<int> ids;
  if (auto it = entries_.find(key); it != entries_.end()) {
    for (const std::string& u : it->second) ids.push_back(unit_id(u));
    return ids;
  }
  for (const std::string& c : utf8_chars(token)) ids.push_back(unit_id(c));
  if (ids.empty()) ids.push_back(kUnkId);
  return ids;
}

int SubwordTable::unit_id(std::string_view unit) const {
  auto it = unit_index_.find(std::string(unit));
  return it == unit_index_.end() ? kUnkId : it->second;
}

}  // namespace uer::text
