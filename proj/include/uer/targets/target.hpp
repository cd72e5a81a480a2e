#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "uer/layers/module.hpp"
#include "uer/layers/recurrent.hpp"
#include "uer/text/examples.hpp"

namespace uer::targets {

enum class TargetKind { kLm, kMlm, kNsp, kAe, kNmt, kCls, kTag };

std::string_view to_string(TargetKind kind);
TargetKind parse_target_kind(std::string_view name);

struct TargetEntry {
  TargetKind kind;
  double weight = 1.0;
};

struct TargetSpec {
  std::vector<TargetEntry> entries;
  std::size_t classes = 2;  // cls and tag heads
  bool tie_decoder_output = false;
  bool bert = false;  // listed as `bert` (mlm + nsp)

  bool has(TargetKind kind) const;
  double weight(TargetKind kind) const;
};

// "mlm:1.0,nsp:0.5" -> entries. A missing weight means 1; `bert` expands to
// mlm + nsp sharing its weight. Weights must be positive, kinds unique.
TargetSpec parse_target_spec(std::string_view text);
std::string format_target_spec(const TargetSpec& spec);

// Loss plus accuracy counters of one head on one batch.
struct TargetResult {
  Tensor loss;
  std::size_t correct = 0;
  std::size_t counted = 0;
};

struct Metric {
  double loss = 0;
  std::size_t correct = 0;
  std::size_t counted = 0;
  bool empty = false;
};

struct TargetOutput {
  Tensor loss;  // weighted sum over heads with a non-empty loss
  std::map<std::string, Metric> metrics;
};

// One head's loss and weight; an undefined loss marks an empty head.
struct WeightedLoss {
  Tensor loss;
  double weight = 1.0;
};

// sum of w_i * loss_i over defined losses. Throws EmptyLossError when none is.
Tensor combine(std::span<const WeightedLoss> parts);

// Argmax hits of logits [N, C] against labels (ignored rows skipped).
std::pair<std::size_t, std::size_t> count_correct(const Tensor& logits, std::span<const int> labels);

// Sentence vector [B, H]: hidden state at position 0, or masked max over time.
Tensor pool(const Tensor& hidden, const Tensor& mask, bool cls_position);

// Base of every head. compute() throws EmptyLossError when the batch carries
// no supervised position for this head.
class Target : public Module {
 public:
  explicit Target(TargetKind kind) : kind_(kind) {}
  TargetKind kind() const { return kind_; }
  virtual TargetResult compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                               const Context& ctx) const = 0;

 private:
  TargetKind kind_;
};

class LmTarget : public Target {
 public:
  LmTarget(std::size_t hidden, std::size_t vocab, Init& init);
  TargetResult compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                       const Context& ctx) const override;
  Tensor logits(const Tensor& hidden) const { return output_->forward(hidden); }

 private:
  layers::Linear* output_;
};

// dense -> gelu -> layer_norm -> vocabulary projection, evaluated only at the
// selected (masked) positions.
class MlmTarget : public Target {
 public:
  MlmTarget(std::size_t hidden, std::size_t vocab, Init& init);
  TargetResult compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                       const Context& ctx) const override;
  Tensor logits(const Tensor& rows) const;
  const layers::Linear& output() const { return *output_; }

 private:
  layers::Linear* dense_;
  layers::LayerNorm* norm_;
  layers::Linear* output_;
};

// pool -> tanh(dense) -> n-way projection. Used for nsp (n = 2, pair labels)
// and cls (class labels).
class SentenceTarget : public Target {
 public:
  SentenceTarget(TargetKind kind, std::size_t hidden, std::size_t classes, bool cls_position, Init& init);
  TargetResult compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                       const Context& ctx) const override;
  Tensor logits(const Tensor& hidden, const Tensor& mask) const;
  std::size_t classes() const { return classes_; }
  const layers::Linear& output() const { return *output_; }

 private:
  std::size_t classes_;
  bool cls_position_;
  layers::Linear* dense_;
  layers::Linear* output_;
};

// Per-token projection for sequence labelling.
class TagTarget : public Target {
 public:
  TagTarget(std::size_t hidden, std::size_t tags, Init& init);
  TargetResult compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                       const Context& ctx) const override;
  Tensor logits(const Tensor& hidden) const { return output_->forward(hidden); }
  std::size_t tags() const { return output_->out(); }

 private:
  layers::Linear* output_;
};

// Single-layer GRU decoder with dot-product attention over the encoder
// states, teacher-forced. The initial state is the masked mean of the encoder
// states. Decoder inputs are layer-normalized embeddings, which keeps the
// input path off the small-init saddle. Each step's output is W [s; context]
// projected to the vocabulary (optionally through the transposed decoder
// embedding); a tanh there saturates under Adam and stalls training.
class Seq2SeqTarget : public Target {
 public:
  Seq2SeqTarget(TargetKind kind, std::size_t hidden, std::size_t vocab, bool tie_output, Init& init);
  TargetResult compute(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                       const Context& ctx) const override;
  // [B, T', V] logits for decoder inputs [B, T'].
  Tensor logits(const Tensor& hidden, const Tensor& mask, std::span<const int> decoder_input,
                std::size_t decoder_length) const;
  // Greedy decoding from [CLS] until [SEP] or max_length tokens.
  std::vector<std::vector<int>> greedy_decode(const Tensor& hidden, const Tensor& mask,
                                              std::size_t max_length) const;

 private:
  Tensor attend_and_project(const Tensor& states, const Tensor& hidden, const Tensor& mask) const;

  std::size_t vocab_;
  Tensor embedding_;
  layers::LayerNorm* embedding_norm_;
  layers::RecurrentCell* cell_;
  layers::Linear* combine_;
  layers::Linear* output_ = nullptr;
  Tensor output_bias_;
};

std::unique_ptr<Target> make_target(TargetKind kind, std::size_t hidden, std::size_t vocab,
                                    const TargetSpec& spec, bool cls_position, Init& init);

// Weighted heads registered as "<kind>". Total loss = sum of w_i * loss_i over
// heads whose loss is non-empty; throws EmptyLossError when every head is empty.
class TargetSet : public Module {
 public:
  TargetSet(const TargetSpec& spec, std::size_t hidden, std::size_t vocab, bool cls_position, Init& init);
  TargetOutput forward(const Tensor& hidden, const Tensor& mask, const text::Batch& batch,
                       const Context& ctx) const;

  const TargetSpec& spec() const { return spec_; }
  std::size_t size() const { return heads_.size(); }
  const Target& head(std::size_t i) const { return *heads_[i]; }
  const Target* find(TargetKind kind) const;

 private:
  TargetSpec spec_;
  std::vector<Target*> heads_;
};

}  // namespace uer::targets
