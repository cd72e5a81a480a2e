#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "uer/text/vocab.hpp"

namespace uer::text {

// Maps tokens to ordered subword-unit ids. Explicit entries come from a
// user-supplied table (radicals, pinyin, morphemes, ...); everything else falls
// back to one unit per character. The five reserved tokens are single units
// with the same ids they have in the vocabulary.
class SubwordTable {
 public:
  SubwordTable();

  // Units for every vocabulary token, plus any explicit entries. Entries
  // override the character fallback.
  static SubwordTable build(const Vocabulary& vocab,
                            std::unordered_map<std::string, std::vector<std::string>> entries = {});
  // Parses `<token>\t<unit> <unit> ...` lines.
  static std::unordered_map<std::string, std::vector<std::string>> load_entries(
      const std::filesystem::path& path);

  // Never empty. Unknown characters map to the [UNK] unit.
  std::vector<int> decompose(std::string_view token) const;

  // Decomposition of every vocabulary id, in id order.
  const std::vector<std::vector<int>>& by_vocab_id() const { return by_vocab_id_; }

  std::size_t unit_count() const { return units_.size(); }
  int unit_id(std::string_view unit) const;
  const std::vector<std::string>& units() const { return units_; }

 private:
  int add_unit(const std::string& unit);

  std::vector<std::string> units_;
  std::unordered_map<std::string, int> unit_index_;
  std::unordered_map<std::string, std::vector<std::string>> entries_;
  std::vector<std::vector<int>> by_vocab_id_;
};

}  // namespace uer::text
