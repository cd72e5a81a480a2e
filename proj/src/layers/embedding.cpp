#include "uer/layers/embedding.hpp"

#include <algorithm>
#include <map>

#include "uer/error.hpp"
#include "uer/layers/attention.hpp"

namespace uer::layers {

Embedding::Embedding(const EmbeddingConfig& config, Init& init) : config_(config) {
  if (config.vocab_size == 0 || config.hidden == 0) throw ConfigError("embedding needs vocab size and width");
  word_ = add_parameter("word", init.normal({config.vocab_size, config.hidden}));
  if (config.kind == EmbeddingKind::kBert) {
    if (config.max_length == 0) throw ConfigError("bert embedding needs a maximum length");
    position_ = add_parameter("position", init.normal({config.max_length, config.hidden}));
    segment_ = add_parameter("segment", init.normal({2, config.hidden}));
    norm_ = &add_module("norm", std::make_unique<LayerNorm>(config.hidden));
  }
}

Tensor Embedding::forward(const text::Batch& batch, const Context& ctx) const {
  return forward(batch.tokens, batch.segments, batch.size, batch.length, ctx);
}

Tensor Embedding::forward(std::span<const int> tokens, std::span<const int> segments, std::size_t rows,
                          std::size_t length, const Context& ctx) const {
  Tensor x = embedding(word_, tokens, {rows, length}, text::kPadId);
  if (config_.kind == EmbeddingKind::kBert) {
    if (length > config_.max_length) {
      throw ContractError("sequence length " + std::to_string(length) + " exceeds position table of " +
                          std::to_string(config_.max_length));
    }
    x = add(x, slice(position_, 0, 0, length));
    x = add(x, embedding(segment_, segments, {rows, length}));
    x = norm_->forward(x);
  }
  return apply_dropout(x, config_.dropout, ctx);
}

Combiner::Combiner(CombineMode mode, std::size_t hidden, std::size_t sub_hidden, Init& init) : mode_(mode) {
  if (mode == CombineMode::kSum) {
    if (hidden != sub_hidden) {
      throw ConfigError("sum combination needs subencoder width " + std::to_string(sub_hidden) +
                        " to equal hidden width " + std::to_string(hidden));
    }
    return;
  }
  project_ = &add_module("project", std::make_unique<Linear>(hidden + sub_hidden, hidden, init));
}

Tensor Combiner::forward(const Tensor& word, const Tensor& sub) const {
  if (mode_ == CombineMode::kSum) {
    if (word.shape() != sub.shape()) {
      throw ShapeError("sum combination of " + shape_str(word.shape()) + " and " + shape_str(sub.shape()));
    }
    return add(word, sub);
  }
  return project_->forward(concat({word, sub}, -1));
}

Subencoder::Subencoder(const SubencoderConfig& config, std::shared_ptr<const text::SubwordTable> table,
                       std::size_t hidden, Init& init)
    : config_(config), table_(std::move(table)) {
  if (!table_) throw ConfigError("subencoder needs a subword table");
  if (config_.subword_vocab == 0) config_.subword_vocab = table_->unit_count();
  if (config_.subword_vocab < table_->unit_count()) throw ConfigError("subword vocabulary smaller than table");
  units_ = add_parameter("units", init.normal({config_.subword_vocab, config_.embedding_width}));
  if (config_.kind == SubencoderKind::kRnn) {
    cell_ = &add_module("rnn", std::make_unique<RecurrentCell>(config_.cell, config_.embedding_width,
                                                              config_.hidden, init));
  } else {
    conv_ = &add_module("cnn", std::make_unique<Conv1d>(config_.embedding_width, config_.hidden,
                                                       config_.kernel, init));
  }
  combiner_ = &add_module("combine", std::make_unique<Combiner>(config_.combine, hidden, config_.hidden, init));
}

Subencoder::States Subencoder::states(const std::vector<std::vector<int>>& words) const {
  if (words.empty()) throw ContractError("no words to subencode");
  const std::size_t U = words.size();
  std::size_t L = 0;
  for (const auto& w : words) {
    if (w.empty()) throw ContractError("word with no subword units");
    L = std::max(L, w.size());
  }
  std::vector<int> ids(U * L, text::kPadId);
  std::vector<double> mask(U * L, 0.0);
  for (std::size_t u = 0; u < U; ++u) {
    for (std::size_t j = 0; j < words[u].size(); ++j) {
      ids[u * L + j] = words[u][j];
      mask[u * L + j] = 1.0;
    }
  }
  Tensor m = Tensor::from({U, L}, std::move(mask));
  Tensor x = zero_padding(embedding(units_, ids, {U, L}), m);
  Tensor h = cell_ ? cell_->run(x, m) : zero_padding(uer::tanh(conv_->forward(x, false)), m);
  return {h, m};
}

Tensor Subencoder::encode_words(const std::vector<std::vector<int>>& words) const {
  States s = states(words);
  return config_.pooling == Pooling::kMean ? masked_mean(s.hidden, s.mask) : masked_max(s.hidden, s.mask);
}

Tensor Subencoder::forward(std::span<const int> tokens, std::size_t rows, std::size_t length) const {
  const auto& by_id = table_->by_vocab_id();
  std::map<int, std::size_t> row_of;
  std::vector<std::vector<int>> words;
  for (int id : tokens) {
    if (id == text::kPadId || row_of.count(id)) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= by_id.size()) {
      throw ContractError("token id " + std::to_string(id) + " has no subword decomposition");
    }
    row_of.emplace(id, words.size());
    words.push_back(by_id[static_cast<std::size_t>(id)]);
  }
  const std::size_t Hs = config_.hidden;
  if (words.empty()) return Tensor::zeros({rows, length, Hs});
  const Tensor pooled = encode_words(words);
  std::vector<std::int64_t> index(rows * length * Hs, -1);
  for (std::size_t p = 0; p < rows * length; ++p) {
    if (tokens[p] == text::kPadId) continue;
    const std::size_t u = row_of.at(tokens[p]);
    for (std::size_t c = 0; c < Hs; ++c) index[p * Hs + c] = static_cast<std::int64_t>(u * Hs + c);
  }
  return gather(pooled, {rows, length, Hs}, std::move(index));
}

}  // namespace uer::layers
