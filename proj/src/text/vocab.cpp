#include "uer/text/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "uer/error.hpp"

namespace uer::text {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

TokenizeMode parse_tokenize_mode(std::string_view name) {
  if (name == "space") return TokenizeMode::kSpace;
  if (name == "char") return TokenizeMode::kChar;
  throw ConfigError("unknown tokenization mode '" + std::string(name) + "' (expected space or char)");
}

std::string_view to_string(TokenizeMode mode) { return mode == TokenizeMode::kSpace ? "space" : "char"; }

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "plain") return CorpusFormat::kPlain;
  if (name == "labeled") return CorpusFormat::kLabeled;
  if (name == "parallel") return CorpusFormat::kParallel;
  if (name == "tagged") return CorpusFormat::kTagged;
  throw ConfigError("unknown corpus format '" + std::string(name) + "'");
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    if (i + len > text.size()) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizeMode::kSpace) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      const std::size_t start = i;
      while (i < text.size() && !is_space(text[i])) ++i;
      if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
  }
  for (std::string& c : utf8_chars(text)) {
    if (c.size() == 1 && is_space(c[0])) continue;
    out.push_back(std::move(c));
  }
  return out;
}

Vocabulary::Vocabulary()
    : tokens_(kReservedTokens.begin(), kReservedTokens.end()), counts_(kReservedCount, 0) {
  for (int i = 0; i < kReservedCount; ++i) index_.emplace(tokens_[static_cast<std::size_t>(i)], i);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (std::string& t : tokens) {
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), t) != kReservedTokens.end()) continue;
    const int id = static_cast<int>(v.tokens_.size());
    if (!v.index_.emplace(t, id).second) throw DataError("duplicate vocabulary token '" + t + "'");
    v.tokens_.push_back(std::move(t));
    v.counts_.push_back(0);
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const std::string> lines, std::size_t min_count, TokenizeMode mode,
                             CorpusFormat format) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const std::string& line : lines) {
    std::vector<std::string_view> fields = split_tabs(line);
    std::vector<std::string_view> text_fields;
    switch (format) {
      case CorpusFormat::kPlain:
        text_fields = {line};
        break;
      case CorpusFormat::kLabeled:
        text_fields.assign(fields.begin() + 1, fields.end());
        break;
      case CorpusFormat::kParallel:
        text_fields = fields;
        break;
      case CorpusFormat::kTagged:
        text_fields = {fields[0]};
        break;
    }
    for (std::string_view field : text_fields) {
      for (std::string& tok : tokenize(field, format == CorpusFormat::kTagged ? TokenizeMode::kSpace : mode)) {
        ++counts[std::move(tok)];
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n < min_count) continue;
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) != kReservedTokens.end()) continue;
    kept.emplace_back(tok, n);
  }
  // std::map iteration is lexicographic, so a stable sort keeps that order on ties.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  Vocabulary v = from_tokens(std::move(tokens));
  for (std::size_t i = 0; i < kept.size(); ++i) v.counts_[kReservedCount + i] = kept[i].second;
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no <= kReservedCount) {
      if (line != kReservedTokens[line_no - 1]) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected reserved token " +
                        kReservedTokens[line_no - 1] + ", found '" + line + "'");
      }
      continue;
    }
    if (line.empty()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty token");
    tokens.push_back(line);
  }
  if (line_no < kReservedCount) throw DataError(path.string() + ": missing reserved tokens");
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const std::string& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end() || it->second == kPadId) return kUnkId;
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x0A;  // token separator
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace uer::text
