#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uer/numerics/ops.hpp"
#include "uer/numerics/tensor.hpp"
#include "uer/text/vocab.hpp"

namespace uer::text {

// One training row before padding. Label blocks a target does not use stay
// empty (sequences) or kIgnoreId (scalars).
struct Example {
  std::vector<int> tokens;
  std::vector<int> segments;
  std::vector<int> lm_labels;
  std::vector<int> mlm_labels;
  std::vector<int> tag_labels;
  int pair_label = kIgnoreId;
  int class_label = kIgnoreId;
  std::vector<int> decoder_input;
  std::vector<int> decoder_labels;

  bool operator==(const Example&) const = default;
};

struct MaskingConfig {
  double rate = 0.15;
  // Fate of a selected position; the three proportions sum to 1.
  double to_mask = 0.8;
  double to_random = 0.1;
  double to_keep = 0.1;
};

struct MaskedRow {
  std::vector<int> tokens;
  std::vector<int> labels;
};

// Selects each maskable position (anything but [PAD]/[CLS]/[SEP]) with
// probability `rate`; selected positions become [MASK], a random non-reserved
// token, or stay unchanged. Labels hold the original id at selected positions.
MaskedRow apply_mlm_masking(std::span<const int> row, std::size_t vocab_size, const MaskingConfig& config,
                            std::mt19937_64& rng);

// Applies masking to example.tokens and fills example.mlm_labels.
void mask_example(Example& example, std::size_t vocab_size, const MaskingConfig& config, std::mt19937_64& rng);

// [CLS] ids [SEP], truncated to max_length.
Example make_single(std::span<const int> ids, std::size_t max_length);
// [CLS] a [SEP] b [SEP] with segments 0 up to the first [SEP] and 1 after.
// Truncates the longer sentence first until the pair fits.
Example make_pair(std::span<const int> a, std::span<const int> b, std::size_t max_length);

// Raw tokens; labels are the tokens shifted left with kIgnoreId last.
Example make_lm_example(std::span<const int> ids, std::size_t max_length);
// Encoder input [CLS] src [SEP]; decoder input [CLS] tgt; decoder labels tgt [SEP].
Example make_seq2seq_example(std::span<const int> source, std::span<const int> target, std::size_t max_length);
Example make_ae_example(std::span<const int> ids, std::size_t max_length);
Example make_cls_example(std::span<const int> ids, int label, std::size_t max_length);

// Corpus-level generators. Line numbers in errors are 1-based.
struct ParsedLabeled {
  int label;
  std::string text;
  std::string text_b;  // empty unless the line has a third field
};
ParsedLabeled parse_labeled_line(const std::string& line, std::size_t line_no, bool pair);

std::vector<Example> make_lm_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                      TokenizeMode mode, std::size_t max_length);
std::vector<Example> make_ae_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                      TokenizeMode mode, std::size_t max_length);
std::vector<Example> make_nmt_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                       TokenizeMode mode, std::size_t max_length);
std::vector<Example> make_cls_examples(std::span<const std::string> lines, const Vocabulary& vocab,
                                       TokenizeMode mode, std::size_t n_classes, std::size_t max_length);

using Document = std::vector<std::vector<int>>;

// Sentence-pair stream for next-sentence prediction. A positive pairs a
// sentence with its true successor; a negative pairs it with a sentence drawn
// from a different document.
class NspExampleStream {
 public:
  NspExampleStream(std::vector<Document> documents, double negative_rate, std::uint64_t seed,
                   std::size_t max_length);
  Example next();

 private:
  std::vector<Document> documents_;
  std::vector<std::size_t> anchors_;  // documents with at least two sentences
  double negative_rate_;
  std::size_t max_length_;
  std::mt19937_64 rng_;
};

std::vector<std::string> read_lines(const std::filesystem::path& path);
// Blank lines separate documents; each line is one sentence.
std::vector<std::vector<std::string>> split_documents(std::span<const std::string> lines);
std::vector<Document> encode_documents(const std::vector<std::vector<std::string>>& documents,
                                       const Vocabulary& vocab, TokenizeMode mode);

// Padded, row-major block of examples.
struct Batch {
  std::size_t size = 0;
  std::size_t length = 0;
  std::size_t decoder_length = 0;
  std::vector<int> tokens;
  std::vector<int> segments;
  std::vector<int> lm_labels;
  std::vector<int> mlm_labels;
  std::vector<int> tag_labels;
  std::vector<int> pair_labels;
  std::vector<int> class_labels;
  std::vector<int> decoder_input;
  std::vector<int> decoder_labels;

  // [B, T], 1 on non-pad positions.
  Tensor pad_mask() const;
  // [B, T'], 1 on non-pad decoder positions.
  Tensor decoder_mask() const;
};

Batch collate(std::span<const Example> examples);

}  // namespace uer::text
