#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "uer/layers/conv.hpp"
#include "uer/layers/module.hpp"
#include "uer/layers/recurrent.hpp"

namespace uer::encoders {

enum class EncoderKind { kLstm, kGru, kCnn, kGatedCnn, kAttnn, kTransformer };
enum class MaskMode { kBidirectional, kCausal };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kTransformer;
  std::size_t layers = 1;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t feedforward = 0;  // 0 means 4 * hidden
  std::size_t kernel = 3;
  MaskMode mask = MaskMode::kBidirectional;  // cnn, gatedcnn, attnn, transformer
  bool bidirectional = false;                // lstm, gru
  double dropout = 0.1;

  std::size_t ffn_width() const { return feedforward ? feedforward : 4 * hidden; }
  // Output at t depends only on inputs at positions <= t.
  bool causal() const;
  // Throws ConfigError on an invalid combination.
  void validate() const;
};

// CLI names: lstm, gru, cnn, gatedcnn, attnn, transformer, transformer-causal.
EncoderConfig parse_encoder_name(std::string_view name);
std::string encoder_name(const EncoderConfig& config);
std::string_view to_string(EncoderKind kind);

// Maps [B, T, in] -> [B, T, hidden]. Padded positions (mask 0) are zeroed on
// entry and exit so they never leak into neighbours or later layers.
class Encoder : public Module {
 public:
  Tensor forward(const Tensor& x, const Tensor& mask, const Context& ctx) const;

  const EncoderConfig& config() const { return config_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t output_width() const { return config_.hidden; }
  const layers::Linear* adapter() const { return adapter_; }

 protected:
  Encoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init);
  // Width seen by the first layer (hidden when an adapter is present).
  std::size_t layer_input() const { return adapter_ ? config_.hidden : input_width_; }
  virtual Tensor encode(const Tensor& x, const Tensor& mask, const Context& ctx) const = 0;

  EncoderConfig config_;

 private:
  std::size_t input_width_;
  layers::Linear* adapter_ = nullptr;
};

class RecurrentEncoder : public Encoder {
 public:
  RecurrentEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init);
  const layers::RecurrentCell& cell(std::size_t layer, bool backward = false) const;

 protected:
  Tensor encode(const Tensor& x, const Tensor& mask, const Context& ctx) const override;

 private:
  struct Layer {
    layers::RecurrentCell* forward;
    layers::RecurrentCell* backward = nullptr;
    layers::Linear* project = nullptr;
  };
  std::vector<Layer> layers_;
};

// Plain CNN layers are linear convolutions; gated layers multiply by a
// sigmoid gate convolution (GLU).
class ConvEncoder : public Encoder {
 public:
  ConvEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init);
  const layers::Conv1d& conv(std::size_t layer) const { return *layers_[layer].conv; }
  const layers::Conv1d* gate(std::size_t layer) const { return layers_[layer].gate; }

 protected:
  Tensor encode(const Tensor& x, const Tensor& mask, const Context& ctx) const override;

 private:
  struct Layer {
    layers::Conv1d* conv;
    layers::Conv1d* gate = nullptr;
  };
  std::vector<Layer> layers_;
};

// Single-head softmax(Q K^T / sqrt(H) + mask) V per layer, no residual or
// feed-forward block.
class AttentionEncoder : public Encoder {
 public:
  AttentionEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init);
  struct Layer {
    layers::Linear* q;
    layers::Linear* k;
    layers::Linear* v;
  };
  const Layer& layer(std::size_t i) const { return layers_[i]; }

 protected:
  Tensor encode(const Tensor& x, const Tensor& mask, const Context& ctx) const override;

 private:
  std::vector<Layer> layers_;
};

// Post-norm transformer layer:
//   x = LN(x + drop(MHA(x)));  x = LN(x + drop(W2 gelu(W1 x)))
class TransformerLayer : public Module {
 public:
  TransformerLayer(std::size_t hidden, std::size_t heads, std::size_t ffn, double dropout, Init& init);
  Tensor forward(const Tensor& x, const Tensor& bias, const Context& ctx) const;

  layers::Linear *q, *k, *v, *o, *inner, *outer;
  layers::LayerNorm *attn_norm, *ffn_norm;

 private:
  std::size_t heads_;
  double dropout_;
};

class TransformerEncoder : public Encoder {
 public:
  TransformerEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init);
  const TransformerLayer& layer(std::size_t i) const { return *layers_[i]; }

 protected:
  Tensor encode(const Tensor& x, const Tensor& mask, const Context& ctx) const override;

 private:
  std::vector<TransformerLayer*> layers_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter,
                                      Init& init);

// Encoders applied in order; entry i is registered under the name "<i>".
class EncoderStack : public Module {
 public:
  EncoderStack(const std::vector<EncoderConfig>& configs, std::size_t input_width, bool allow_adapters,
               Init& init);
  Tensor forward(const Tensor& x, const Tensor& mask, const Context& ctx) const;

  std::size_t size() const { return encoders_.size(); }
  const Encoder& at(std::size_t i) const { return *encoders_[i]; }
  std::size_t output_width() const { return encoders_.back()->output_width(); }
  bool causal() const;
  // Sentence representations come from the [CLS] position only when the last
  // encoder is a bidirectional transformer; otherwise max pooling over time.
  bool uses_cls_position() const;

 private:
  std::vector<Encoder*> encoders_;
};

}  // namespace uer::encoders
