#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uer/encoders/encoder.hpp"
#include "uer/layers/embedding.hpp"
#include "uer/pipeline/config.hpp"
#include "uer/targets/target.hpp"
#include "uer/text/vocab.hpp"

namespace uer::pipeline {

// Declarative description of one assembled model.
struct ModelSpec {
  layers::EmbeddingKind embedding = layers::EmbeddingKind::kBert;
  std::optional<layers::SubencoderConfig> subencoder;
  std::string subword_table;  // optional `<token>\t<units>` file
  std::vector<encoders::EncoderConfig> encoders;
  targets::TargetSpec targets;
  std::size_t hidden = 64;      // embedding width
  std::size_t max_length = 64;  // longest row, [CLS] and [SEP] included
  double dropout = 0.1;         // after the embedding
  bool adapters = true;         // width adapters between encoders of different widths
  text::TokenizeMode tokenize = text::TokenizeMode::kSpace;
  std::uint64_t seed = 7;
  std::string vocab_path;
  std::size_t vocab_size = 0;  // filled in by assembly
  std::uint64_t vocab_hash = 0;
  std::string task;                 // downstream task of a fine-tuned model
  std::vector<std::string> labels;  // its label names, index = class id

  // Throws ConfigError on every invalid combination.
  void validate() const;
  ConfigFile to_config() const;
  // Model keys of `cfg` over the defaults; other keys are ignored.
  static ModelSpec from_config(const ConfigFile& cfg);
};

// Root keys read by ModelSpec::from_config.
const std::vector<std::string>& model_keys();
const std::vector<std::string>& encoder_keys();
const std::vector<std::string>& subencoder_keys();

// The four reference wirings: bert, gpt, quick-thoughts, infersent.
ModelSpec recipe(std::string_view name);

// embedding -> (subencoder combine) -> encoder stack -> targets, registered as
// embedding.*, subencoder.*, encoder.<i>.*, target.<kind>.*.
class Model : public Module {
 public:
  Model(const ModelSpec& spec, const text::Vocabulary& vocab);

  const ModelSpec& spec() const { return spec_; }
  // [B, T, H] encoder states.
  Tensor encode(const text::Batch& batch, const Context& ctx) const;
  targets::TargetOutput forward(const text::Batch& batch, const Context& ctx) const;

  const layers::Embedding& embedding() const { return *embedding_; }
  const layers::Subencoder* subencoder() const { return subencoder_; }
  const encoders::EncoderStack& encoder() const { return *encoder_; }
  const targets::TargetSet& targets() const { return *targets_; }

  // Parameters whose name does not start with `prefix` stop requiring
  // gradients, so backward never produces one for them.
  void freeze_except(const std::string& prefix);

 private:
  ModelSpec spec_;
  layers::Embedding* embedding_;
  layers::Subencoder* subencoder_ = nullptr;
  encoders::EncoderStack* encoder_;
  targets::TargetSet* targets_;
};

std::unique_ptr<Model> assemble(const ModelSpec& spec, const text::Vocabulary& vocab);

}  // namespace uer::pipeline
