#include "uer/encoders/encoder.hpp"

#include <cmath>

#include "uer/error.hpp"
#include "uer/layers/attention.hpp"

namespace uer::encoders {

using layers::attention_bias;
using layers::zero_padding;

bool EncoderConfig::causal() const {
  switch (kind) {
    case EncoderKind::kLstm:
    case EncoderKind::kGru:
      return !bidirectional;
    default:
      return mask == MaskMode::kCausal;
  }
}

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder needs at least one layer");
  if (hidden < 1) throw ConfigError("encoder hidden width must be positive");
  if (kind == EncoderKind::kTransformer) {
    if (heads < 1 || hidden % heads != 0) {
      throw ConfigError("transformer heads (" + std::to_string(heads) + ") must divide hidden width (" +
                        std::to_string(hidden) + ")");
    }
  }
  if (kind == EncoderKind::kCnn || kind == EncoderKind::kGatedCnn) {
    if (kernel < 1) throw ConfigError("convolution kernel width must be positive");
    if (mask == MaskMode::kBidirectional && kernel % 2 == 0) {
      throw ConfigError("bidirectional convolution needs an odd kernel width, got " + std::to_string(kernel));
    }
  }
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
}

EncoderConfig parse_encoder_name(std::string_view name) {
  EncoderConfig c;
  if (name == "lstm") {
    c.kind = EncoderKind::kLstm;
  } else if (name == "gru") {
    c.kind = EncoderKind::kGru;
  } else if (name == "cnn") {
    c.kind = EncoderKind::kCnn;
  } else if (name == "gatedcnn") {
    c.kind = EncoderKind::kGatedCnn;
  } else if (name == "attnn") {
    c.kind = EncoderKind::kAttnn;
  } else if (name == "transformer") {
    c.kind = EncoderKind::kTransformer;
  } else if (name == "transformer-causal") {
    c.kind = EncoderKind::kTransformer;
    c.mask = MaskMode::kCausal;
  } else {
    throw ConfigError("unknown encoder '" + std::string(name) +
                      "' (expected lstm, gru, cnn, gatedcnn, attnn, transformer, transformer-causal)");
  }
  return c;
}

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kLstm: return "lstm";
    case EncoderKind::kGru: return "gru";
    case EncoderKind::kCnn: return "cnn";
    case EncoderKind::kGatedCnn: return "gatedcnn";
    case EncoderKind::kAttnn: return "attnn";
    case EncoderKind::kTransformer: return "transformer";
  }
  return "?";
}

std::string encoder_name(const EncoderConfig& config) {
  std::string name(to_string(config.kind));
  if (config.kind == EncoderKind::kTransformer && config.mask == MaskMode::kCausal) name += "-causal";
  return name;
}

Encoder::Encoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init)
    : config_(config), input_width_(input_width) {
  config_.validate();
  if (input_width == config_.hidden) return;
  if (allow_adapter) {
    adapter_ = &add_module("adapter", std::make_unique<layers::Linear>(input_width, config_.hidden, init));
  } else if (config_.kind == EncoderKind::kTransformer) {
    throw ConfigError("transformer input width " + std::to_string(input_width) + " differs from hidden width " +
                      std::to_string(config_.hidden) + " and adapters are disabled");
  }
}

Tensor Encoder::forward(const Tensor& x, const Tensor& mask, const Context& ctx) const {
  if (x.rank() != 3 || x.dim(2) != input_width_) {
    throw ShapeError("encoder expects [B, T, " + std::to_string(input_width_) + "], got " + shape_str(x.shape()));
  }
  Tensor h = zero_padding(x, mask);
  if (adapter_) h = adapter_->forward(h);
  return zero_padding(encode(h, mask, ctx), mask);
}

RecurrentEncoder::RecurrentEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter,
                                   Init& init)
    : Encoder(config, input_width, allow_adapter, init) {
  const auto cell_kind = config_.kind == EncoderKind::kLstm ? layers::CellKind::kLstm : layers::CellKind::kGru;
  const std::size_t H = config_.hidden;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? layer_input() : H;
    const std::string name = "layer." + std::to_string(l);
    Layer layer{};
    layer.forward = &add_module(name + ".forward", std::make_unique<layers::RecurrentCell>(cell_kind, in, H, init));
    if (config_.bidirectional) {
      layer.backward =
          &add_module(name + ".backward", std::make_unique<layers::RecurrentCell>(cell_kind, in, H, init));
      layer.project = &add_module(name + ".project", std::make_unique<layers::Linear>(2 * H, H, init));
    }
    layers_.push_back(layer);
  }
}

const layers::RecurrentCell& RecurrentEncoder::cell(std::size_t layer, bool backward) const {
  return backward ? *layers_.at(layer).backward : *layers_.at(layer).forward;
}

Tensor RecurrentEncoder::encode(const Tensor& x, const Tensor& mask, const Context& ctx) const {
  Tensor h = x;
  for (const Layer& layer : layers_) {
    Tensor out = layer.forward->run(h, mask);
    if (layer.backward) out = layer.project->forward(concat({out, layer.backward->run(h, mask, true)}, -1));
    h = apply_dropout(out, config_.dropout, ctx);
  }
  return h;
}

ConvEncoder::ConvEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter, Init& init)
    : Encoder(config, input_width, allow_adapter, init) {
  const std::size_t H = config_.hidden;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? layer_input() : H;
    const std::string name = "layer." + std::to_string(l);
    Layer layer{};
    layer.conv = &add_module(name + ".conv", std::make_unique<layers::Conv1d>(in, H, config_.kernel, init));
    if (config_.kind == EncoderKind::kGatedCnn) {
      layer.gate = &add_module(name + ".gate", std::make_unique<layers::Conv1d>(in, H, config_.kernel, init));
    }
    layers_.push_back(layer);
  }
}

Tensor ConvEncoder::encode(const Tensor& x, const Tensor& mask, const Context& ctx) const {
  const bool causal = config_.mask == MaskMode::kCausal;
  Tensor h = x;
  for (const Layer& layer : layers_) {
    Tensor out = layer.conv->forward(h, causal);
    if (layer.gate) out = mul(out, sigmoid(layer.gate->forward(h, causal)));
    // Re-zero padding so the next layer's windows see zeros past each row's end.
    h = zero_padding(apply_dropout(out, config_.dropout, ctx), mask);
  }
  return h;
}

AttentionEncoder::AttentionEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter,
                                   Init& init)
    : Encoder(config, input_width, allow_adapter, init) {
  const std::size_t H = config_.hidden;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t in = l == 0 ? layer_input() : H;
    const std::string name = "layer." + std::to_string(l);
    layers_.push_back({&add_module(name + ".q", std::make_unique<layers::Linear>(in, H, init)),
                       &add_module(name + ".k", std::make_unique<layers::Linear>(in, H, init, false)),
                       &add_module(name + ".v", std::make_unique<layers::Linear>(in, H, init))});
  }
}

Tensor AttentionEncoder::encode(const Tensor& x, const Tensor& mask, const Context& ctx) const {
  const Tensor bias = reshape(attention_bias(mask, x.dim(1), config_.mask == MaskMode::kCausal),
                              {x.dim(0), x.dim(1), x.dim(1)});
  Tensor h = x;
  for (const Layer& layer : layers_) {
    Tensor out = layers::scaled_dot_attention(layer.q->forward(h), layer.k->forward(h), layer.v->forward(h), bias);
    h = zero_padding(apply_dropout(out, config_.dropout, ctx), mask);
  }
  return h;
}

TransformerLayer::TransformerLayer(std::size_t hidden, std::size_t heads, std::size_t ffn, double dropout,
                                   Init& init)
    : heads_(heads), dropout_(dropout) {
  q = &add_module("attn.q", std::make_unique<layers::Linear>(hidden, hidden, init));
  // A key bias shifts every score of a query equally, which softmax ignores.
  k = &add_module("attn.k", std::make_unique<layers::Linear>(hidden, hidden, init, false));
  v = &add_module("attn.v", std::make_unique<layers::Linear>(hidden, hidden, init));
  o = &add_module("attn.o", std::make_unique<layers::Linear>(hidden, hidden, init));
  attn_norm = &add_module("attn_norm", std::make_unique<layers::LayerNorm>(hidden));
  inner = &add_module("ffn.inner", std::make_unique<layers::Linear>(hidden, ffn, init));
  outer = &add_module("ffn.outer", std::make_unique<layers::Linear>(ffn, hidden, init));
  ffn_norm = &add_module("ffn_norm", std::make_unique<layers::LayerNorm>(hidden));
}

Tensor TransformerLayer::forward(const Tensor& x, const Tensor& bias, const Context& ctx) const {
  using layers::merge_heads;
  using layers::split_heads;
  const Tensor ctx_heads = layers::scaled_dot_attention(split_heads(q->forward(x), heads_),
                                                        split_heads(k->forward(x), heads_),
                                                        split_heads(v->forward(x), heads_), bias);
  const Tensor attended = apply_dropout(o->forward(merge_heads(ctx_heads)), dropout_, ctx);
  const Tensor h = attn_norm->forward(add(x, attended));
  const Tensor ff = apply_dropout(outer->forward(gelu(inner->forward(h))), dropout_, ctx);
  return ffn_norm->forward(add(h, ff));
}

TransformerEncoder::TransformerEncoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter,
                                       Init& init)
    : Encoder(config, input_width, allow_adapter, init) {
  for (std::size_t l = 0; l < config_.layers; ++l) {
    layers_.push_back(&add_module("layer." + std::to_string(l),
                                  std::make_unique<TransformerLayer>(config_.hidden, config_.heads,
                                                                     config_.ffn_width(), config_.dropout, init)));
  }
}

Tensor TransformerEncoder::encode(const Tensor& x, const Tensor& mask, const Context& ctx) const {
  const Tensor bias = attention_bias(mask, x.dim(1), config_.mask == MaskMode::kCausal);
  Tensor h = x;
  for (const TransformerLayer* layer : layers_) h = layer->forward(h, bias, ctx);
  return h;
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& config, std::size_t input_width, bool allow_adapter,
                                      Init& init) {
  switch (config.kind) {
    case EncoderKind::kLstm:
    case EncoderKind::kGru:
      return std::make_unique<RecurrentEncoder>(config, input_width, allow_adapter, init);
    case EncoderKind::kCnn:
    case EncoderKind::kGatedCnn:
      return std::make_unique<ConvEncoder>(config, input_width, allow_adapter, init);
    case EncoderKind::kAttnn:
      return std::make_unique<AttentionEncoder>(config, input_width, allow_adapter, init);
    case EncoderKind::kTransformer:
      return std::make_unique<TransformerEncoder>(config, input_width, allow_adapter, init);
  }
  throw ConfigError("unknown encoder kind");
}

EncoderStack::EncoderStack(const std::vector<EncoderConfig>& configs, std::size_t input_width,
                           bool allow_adapters, Init& init) {
  if (configs.empty()) throw ConfigError("encoder stack is empty");
  std::size_t width = input_width;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    encoders_.push_back(&add_module(std::to_string(i), make_encoder(configs[i], width, allow_adapters, init)));
    width = configs[i].hidden;
  }
}

Tensor EncoderStack::forward(const Tensor& x, const Tensor& mask, const Context& ctx) const {
  Tensor h = x;
  for (const Encoder* e : encoders_) h = e->forward(h, mask, ctx);
  return h;
}

bool EncoderStack::causal() const {
  for (const Encoder* e : encoders_) {
    if (!e->config().causal()) return false;
  }
  return true;
}

bool EncoderStack::uses_cls_position() const {
  const EncoderConfig& last = encoders_.back()->config();
  return last.kind == EncoderKind::kTransformer && last.mask == MaskMode::kBidirectional;
}

}  // namespace uer::encoders
