#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uer::text {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kReservedCount = 5;

inline const std::array<std::string, kReservedCount> kReservedTokens = {"[PAD]", "[UNK]", "[CLS]",
                                                                         "[SEP]", "[MASK]"};

enum class TokenizeMode { kSpace, kChar };

TokenizeMode parse_tokenize_mode(std::string_view name);
std::string_view to_string(TokenizeMode mode);

// `space` splits on ASCII whitespace; `char` emits every non-space UTF-8 code
// point as its own token.
std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode);

// Code points of `text`, each as its own string. Invalid lead bytes are
// passed through one byte at a time.
std::vector<std::string> utf8_chars(std::string_view text);

// Which tab-separated fields of a corpus line carry text.
enum class CorpusFormat {
  kPlain,     // whole line
  kLabeled,   // `label \t text [\t text]`
  kParallel,  // `source \t target`
  kTagged,    // `token \t tag`
};

CorpusFormat parse_corpus_format(std::string_view name);

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();

  // Reserved tokens, then every token seen at least `min_count` times ordered
  // by descending count with lexicographic tie-break.
  static Vocabulary build(std::span<const std::string> lines, std::size_t min_count, TokenizeMode mode,
                          CorpusFormat format = CorpusFormat::kPlain);
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  // [UNK] for unknown tokens. The literal "[PAD]" also maps to [UNK] so that
  // padding only ever comes from batching.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t count(int id) const { return counts_.at(static_cast<std::size_t>(id)); }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  // FNV-1a over the token list; identifies a vocabulary inside checkpoints.
  std::uint64_t hash() const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace uer::text
