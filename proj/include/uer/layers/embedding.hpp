#pragma once

#include <memory>

#include "uer/layers/conv.hpp"
#include "uer/layers/module.hpp"
#include "uer/layers/recurrent.hpp"
#include "uer/text/examples.hpp"
#include "uer/text/subword.hpp"

namespace uer::layers {

enum class EmbeddingKind { kPlain, kBert };

struct EmbeddingConfig {
  EmbeddingKind kind = EmbeddingKind::kBert;
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  std::size_t max_length = 64;  // position table rows (bert only)
  double dropout = 0.1;
};

// plain: word lookup. bert: layer_norm(word + position + segment).
// Parameters: word, position, segment, norm.{gamma,beta}.
class Embedding : public Module {
 public:
  Embedding(const EmbeddingConfig& config, Init& init);
  // [B, T, H] from batch.tokens / batch.segments.
  Tensor forward(const text::Batch& batch, const Context& ctx) const;
  Tensor forward(std::span<const int> tokens, std::span<const int> segments, std::size_t rows,
                 std::size_t length, const Context& ctx) const;

  const EmbeddingConfig& config() const { return config_; }
  const Tensor& word() const { return word_; }
  const Tensor& position() const { return position_; }
  const Tensor& segment() const { return segment_; }

 private:
  EmbeddingConfig config_;
  Tensor word_;
  Tensor position_;
  Tensor segment_;
  LayerNorm* norm_ = nullptr;
};

enum class SubencoderKind { kRnn, kCnn };
enum class Pooling { kMean, kMax };
enum class CombineMode { kSum, kConcatProject };

struct SubencoderConfig {
  SubencoderKind kind = SubencoderKind::kCnn;
  std::size_t subword_vocab = 0;
  std::size_t embedding_width = 32;
  std::size_t hidden = 64;  // H'
  Pooling pooling = Pooling::kMean;
  CombineMode combine = CombineMode::kSum;
  CellKind cell = CellKind::kGru;  // rnn kind only
  std::size_t kernel = 3;          // cnn kind only
};

// Merges word embeddings [.., H] with subencoder output [.., H'].
// sum: H' must equal H. concat-project: linear map of [word; sub] to H.
class Combiner : public Module {
 public:
  Combiner(CombineMode mode, std::size_t hidden, std::size_t sub_hidden, Init& init);
  Tensor forward(const Tensor& word, const Tensor& sub) const;
  const Linear* projection() const { return project_; }

 private:
  CombineMode mode_;
  Linear* project_ = nullptr;
};

// Builds a vector for each word from its subword units: embed units, run a
// recurrent cell (rnn) or a width-k zero-padded convolution with tanh (cnn),
// then mean- or max-pool over the units.
class Subencoder : public Module {
 public:
  Subencoder(const SubencoderConfig& config, std::shared_ptr<const text::SubwordTable> table,
             std::size_t hidden, Init& init);

  struct States {
    Tensor hidden;  // [U, L, H'], zero past each word's length
    Tensor mask;    // [U, L]
  };
  States states(const std::vector<std::vector<int>>& words) const;
  // [U, H'] pooled word vectors.
  Tensor encode_words(const std::vector<std::vector<int>>& words) const;
  // [B, T, H'] vectors for every token of the batch; padding rows are zero.
  Tensor forward(std::span<const int> tokens, std::size_t rows, std::size_t length) const;
  Tensor forward(const text::Batch& batch) const { return forward(batch.tokens, batch.size, batch.length); }

  Tensor combine(const Tensor& word, const Tensor& sub) const { return combiner_->forward(word, sub); }

  const SubencoderConfig& config() const { return config_; }
  const Tensor& unit_table() const { return units_; }
  const RecurrentCell* cell() const { return cell_; }
  const Conv1d* conv() const { return conv_; }

 private:
  SubencoderConfig config_;
  std::shared_ptr<const text::SubwordTable> table_;
  Tensor units_;
  RecurrentCell* cell_ = nullptr;
  Conv1d* conv_ = nullptr;
  Combiner* combiner_ = nullptr;
};

}  // namespace uer::layers
