#include "uer/text/examples.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "uer/error.hpp"

namespace uer::text {

namespace {

bool maskable(int id) { return id != kPadId && id != kClsId && id != kSepId; }

std::string where(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab, TokenizeMode mode) {
  const auto toks = tokenize(text, mode);
  return vocab.encode(toks);
}

void check_length(std::size_t max_length, std::size_t minimum) {
  if (max_length < minimum) {
    throw ConfigError("sequence length " + std::to_string(max_length) + " too small (need >= " +
                      std::to_string(minimum) + ")");
  }
}

bool blank(const std::string& line) { return tokenize(line, TokenizeMode::kSpace).empty(); }

}  // namespace

MaskedRow apply_mlm_masking(std::span<const int> row, std::size_t vocab_size, const MaskingConfig& config,
                            std::mt19937_64& rng) {
  if (std::none_of(row.begin(), row.end(), maskable)) {
    throw ContractError("row has no maskable position");
  }
  if (config.rate < 0 || config.rate > 1) throw ConfigError("mask rate must lie in [0,1]");
  const double total = config.to_mask + config.to_random + config.to_keep;
  if (config.to_mask < 0 || config.to_random < 0 || config.to_keep < 0 || total <= 0) {
    throw ConfigError("masking proportions must be non-negative with a positive sum");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MaskedRow out{std::vector<int>(row.begin(), row.end()), std::vector<int>(row.size(), kIgnoreId)};
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!maskable(row[i])) continue;
    // Strict comparison keeps rate=0 from ever selecting and rate=1 always selecting.
    if (!(unit(rng) < config.rate)) continue;
    out.labels[i] = row[i];
    const double fate = unit(rng) * total;
    if (fate < config.to_mask) {
      out.tokens[i] = kMaskId;
    } else if (fate < config.to_mask + config.to_random) {
      if (vocab_size > static_cast<std::size_t>(kReservedCount)) {
        std::uniform_int_distribution<int> pick(kReservedCount, static_cast<int>(vocab_size) - 1);
        out.tokens[i] = pick(rng);
      }
    }
  }
  return out;
}

void mask_example(Example& example, std::size_t vocab_size, const MaskingConfig& config, std::mt19937_64& rng) {
  MaskedRow m = apply_mlm_masking(example.tokens, vocab_size, config, rng);
  example.tokens = std::move(m.tokens);
  example.mlm_labels = std::move(m.labels);
}

Example make_single(std::span<const int> ids, std::size_t max_length) {
  check_length(max_length, 3);
  const std::size_t n = std::min(ids.size(), max_length - 2);
  Example ex;
  ex.tokens.reserve(n + 2);
  ex.tokens.push_back(kClsId);
  ex.tokens.insert(ex.tokens.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
  ex.tokens.push_back(kSepId);
  ex.segments.assign(ex.tokens.size(), 0);
  return ex;
}

Example make_pair(std::span<const int> a, std::span<const int> b, std::size_t max_length) {
  check_length(max_length, 5);
  std::size_t na = a.size(), nb = b.size();
  while (na + nb + 3 > max_length) {
    if (na > nb) {
      --na;
    } else {
      --nb;
    }
  }
  Example ex;
  ex.tokens.push_back(kClsId);
  ex.tokens.insert(ex.tokens.end(), a.begin(), a.begin() + static_cast<std::ptrdiff_t>(na));
  ex.tokens.push_back(kSepId);
  ex.segments.assign(ex.tokens.size(), 0);
  ex.tokens.insert(ex.tokens.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(nb));
  ex.tokens.push_back(kSepId);
  ex.segments.resize(ex.tokens.size(), 1);
  return ex;
}

Example make_lm_example(std::span<const int> ids, std::size_t max_length) {
  check_length(max_length, 1);
  const std::size_t n = std::min(ids.size(), max_length);
  Example ex;
  ex.tokens.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
  ex.segments.assign(n, 0);
  ex.lm_labels.assign(n, kIgnoreId);
  for (std::size_t i = 0; i + 1 < n; ++i) ex.lm_labels[i] = ex.tokens[i + 1];
  return ex;
}

Example make_seq2seq_example(std::span<const int> source, std::span<const int> target, std::size_t max_length) {
  Example ex = make_single(source, max_length);
  const std::size_t n = std::min(target.size(), max_length - 1);
  ex.decoder_input.push_back(kClsId);
  ex.decoder_input.insert(ex.decoder_input.end(), target.begin(), target.begin() + static_cast<std::ptrdiff_t>(n));
  ex.decoder_labels.assign(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(n));
  ex.decoder_labels.push_back(kSepId);
  return ex;
}

Example make_ae_example(std::span<const int> ids, std::size_t max_length) {
  return make_seq2seq_example(ids, ids, max_length);
}

Example make_cls_example(std::span<const int> ids, int label, std::size_t max_length) {
  Example ex = make_single(ids, max_length);
  ex.class_label = label;
  return ex;
}

ParsedLabeled parse_labeled_line(const std::string& line, std::size_t line_no, bool pair) {
  const auto fields = split_tabs(line);
  const std::size_t want = pair ? 3 : 2;
  if (fields.size() != want) {
    throw DataError(where(line_no) + "expected " + std::to_string(want) + " tab-separated fields, found " +
                    std::to_string(fields.size()));
  }
  ParsedLabeled out{};
  const std::string_view f = fields[0];
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out.label);
  if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
    throw DataError(where(line_no) + "label '" + std::string(f) + "' is not an integer");
  }
  out.text = std::string(fields[1]);
  if (pair) out.text_b = std::string(fields[2]);
  return out;
}

std::vector<Example> make_lm_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                      TokenizeMode mode, std::size_t max_length) {
  std::vector<Example> out;
  for (const std::string& line : lines) {
    if (blank(line)) continue;
    out.push_back(make_lm_example(encode_text(line, vocab, mode), max_length));
  }
  return out;
}

std::vector<Example> make_ae_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                      TokenizeMode mode, std::size_t max_length) {
  std::vector<Example> out;
  for (const std::string& line : lines) {
    if (blank(line)) continue;
    out.push_back(make_ae_example(encode_text(line, vocab, mode), max_length));
  }
  return out;
}

std::vector<Example> make_nmt_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                       TokenizeMode mode, std::size_t max_length) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const auto fields = split_tabs(lines[i]);
    if (fields.size() != 2) {
      throw DataError(where(i + 1) + "expected <source>\\t<target>, found " + std::to_string(fields.size()) +
                      " field(s)");
    }
    const auto src = encode_text(fields[0], vocab, mode);
    const auto tgt = encode_text(fields[1], vocab, mode);
    if (src.empty()) throw DataError(where(i + 1) + "empty source sentence");
    if (tgt.empty()) throw DataError(where(i + 1) + "missing target sentence");
    out.push_back(make_seq2seq_example(src, tgt, max_length));
  }
  return out;
}

std::vector<Example> make_cls_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                       TokenizeMode mode, std::size_t n_classes, std::size_t max_length) {
  if (n_classes < 2) throw ConfigError("classification needs at least 2 classes");
  std::vector<Example> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) continue;
    const bool pair = std::count(lines[i].begin(), lines[i].end(), '\t') == 2;
    const ParsedLabeled p = parse_labeled_line(lines[i], i + 1, pair);
    if (p.label < 0 || static_cast<std::size_t>(p.label) >= n_classes) {
      throw DataError(where(i + 1) + "label " + std::to_string(p.label) + " outside [0," +
                      std::to_string(n_classes) + ")");
    }
    Example ex = pair ? make_pair(encode_text(p.text, vocab, mode), encode_text(p.text_b, vocab, mode), max_length)
                      : make_single(encode_text(p.text, vocab, mode), max_length);
    ex.class_label = p.label;
    out.push_back(std::move(ex));
  }
  return out;
}

NspExampleStream::NspExampleStream(std::vector<Document> documents, double negative_rate, std::uint64_t seed,
                                   std::size_t max_length)
    : documents_(std::move(documents)), negative_rate_(negative_rate), max_length_(max_length), rng_(seed) {
  if (negative_rate < 0 || negative_rate >= 1) throw ConfigError("negative rate must lie in [0,1)");
  check_length(max_length, 5);
  for (std::size_t d = 0; d < documents_.size(); ++d) {
    if (documents_[d].size() >= 2) anchors_.push_back(d);
  }
  if (anchors_.empty()) throw DataError("next-sentence examples need a document with at least two sentences");
  if (negative_rate > 0 && documents_.size() < 2) {
    throw DataError("next-sentence negatives need at least two documents, found " +
                    std::to_string(documents_.size()));
  }
}

Example NspExampleStream::next() {
  std::uniform_int_distribution<std::size_t> pick_anchor(0, anchors_.size() - 1);
  const std::size_t d = anchors_[pick_anchor(rng_)];
  const Document& doc = documents_[d];
  std::uniform_int_distribution<std::size_t> pick_sentence(0, doc.size() - 2);
  const std::size_t s = pick_sentence(rng_);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool negative = unit(rng_) < negative_rate_;
  if (!negative) {
    Example ex = make_pair(doc[s], doc[s + 1], max_length_);
    ex.pair_label = 1;
    return ex;
  }
  std::uniform_int_distribution<std::size_t> pick_other(0, documents_.size() - 2);
  std::size_t other = pick_other(rng_);
  if (other >= d) ++other;
  const Document& odoc = documents_[other];
  std::uniform_int_distribution<std::size_t> pick_any(0, odoc.size() - 1);
  Example ex = make_pair(doc[s], odoc[pick_any(rng_)], max_length_);
  ex.pair_label = 0;
  return ex;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::vector<std::string>> split_documents(std::span<const std::string> lines) {
  std::vector<std::vector<std::string>> docs(1);
  for (const std::string& line : lines) {
    if (blank(line)) {
      if (!docs.back().empty()) docs.emplace_back();
      continue;
    }
    docs.back().push_back(line);
  }
  if (docs.back().empty()) docs.pop_back();
  return docs;
}

std::vector<Document> encode_documents(const std::vector<std::vector<std::string>>& documents,
                                       const Vocabulary& vocab, TokenizeMode mode) {
  std::vector<Document> out;
  out.reserve(documents.size());
  for (const auto& doc : documents) {
    Document encoded;
    for (const std::string& sentence : doc) {
      auto ids = encode_text(sentence, vocab, mode);
      if (!ids.empty()) encoded.push_back(std::move(ids));
    }
    if (!encoded.empty()) out.push_back(std::move(encoded));
  }
  return out;
}

namespace {

Tensor mask_of(const std::vector<int>& ids, std::size_t rows, std::size_t cols) {
  std::vector<double> m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != kPadId ? 1.0 : 0.0;
  return Tensor::from({rows, cols}, std::move(m));
}

// Pads each row of `get(example)` to `width` when any example carries the block.
template <typename Get>
std::vector<int> pad_block(std::span<const Example> examples, std::size_t width, int fill, Get get) {
  const bool any = std::any_of(examples.begin(), examples.end(), [&](const Example& e) { return !get(e).empty(); });
  if (!any) return {};
  std::vector<int> out(examples.size() * width, fill);
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const std::vector<int>& row = get(examples[b]);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(b * width));
  }
  return out;
}

}  // namespace

Tensor Batch::pad_mask() const { return mask_of(tokens, size, length); }

Tensor Batch::decoder_mask() const {
  if (decoder_length == 0) throw ContractError("batch has no decoder block");
  return mask_of(decoder_input, size, decoder_length);
}

Batch collate(std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("cannot collate an empty example list");
  Batch batch;
  batch.size = examples.size();
  for (const Example& e : examples) {
    if (e.tokens.empty()) throw ContractError("example has no tokens");
    if (e.segments.size() != e.tokens.size()) throw ContractError("segments do not match tokens");
    batch.length = std::max(batch.length, e.tokens.size());
    batch.decoder_length = std::max(batch.decoder_length, e.decoder_input.size());
  }
  const std::size_t T = batch.length;
  batch.tokens = pad_block(examples, T, kPadId, [](const Example& e) -> const auto& { return e.tokens; });
  batch.segments = pad_block(examples, T, 0, [](const Example& e) -> const auto& { return e.segments; });
  if (batch.segments.empty()) batch.segments.assign(batch.size * T, 0);
  batch.lm_labels = pad_block(examples, T, kIgnoreId, [](const Example& e) -> const auto& { return e.lm_labels; });
  batch.mlm_labels = pad_block(examples, T, kIgnoreId, [](const Example& e) -> const auto& { return e.mlm_labels; });
  batch.tag_labels = pad_block(examples, T, kIgnoreId, [](const Example& e) -> const auto& { return e.tag_labels; });
  const std::size_t D = batch.decoder_length;
  if (D > 0) {
    batch.decoder_input =
        pad_block(examples, D, kPadId, [](const Example& e) -> const auto& { return e.decoder_input; });
    batch.decoder_labels =
        pad_block(examples, D, kIgnoreId, [](const Example& e) -> const auto& { return e.decoder_labels; });
  }
  const bool any_pair = std::any_of(examples.begin(), examples.end(), [](const Example& e) { return e.pair_label != kIgnoreId; });
  const bool any_class = std::any_of(examples.begin(), examples.end(), [](const Example& e) { return e.class_label != kIgnoreId; });
  for (const Example& e : examples) {
    if (any_pair) batch.pair_labels.push_back(e.pair_label);
    if (any_class) batch.class_labels.push_back(e.class_label);
  }
  return batch;
}

}  // namespace uer::text
