#include "uer/layers/attention.hpp"

#include <cmath>

#include "uer/error.hpp"

namespace uer::layers {

Tensor attention_bias(const Tensor& key_mask, std::size_t query_length, bool causal) {
  const std::size_t B = key_mask.dim(0), Tk = key_mask.dim(1), Tq = query_length;
  if (causal && Tq != Tk) throw ShapeError("causal attention needs equal query and key lengths");
  std::vector<double> bias(B * Tq * Tk, 0.0);
  auto m = key_mask.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < Tq; ++i) {
      for (std::size_t j = 0; j < Tk; ++j) {
        if (m[b * Tk + j] == 0.0 || (causal && j > i)) bias[(b * Tq + i) * Tk + j] = kMaskedLogit;
      }
    }
  }
  return Tensor::from({B, 1, Tq, Tk}, std::move(bias));
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias) {
  const double d = static_cast<double>(q.dim(-1));
  Tensor scores = scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(d));
  if (bias.defined()) scores = add(scores, bias);
  return matmul(softmax(scores, -1), v);
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t B = x.dim(0), T = x.dim(1), H = x.dim(2);
  if (H % heads != 0) throw ConfigError("heads must divide the hidden width");
  return permute(reshape(x, {B, T, heads, H / heads}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
  const std::size_t B = x.dim(0), h = x.dim(1), T = x.dim(2), d = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), {B, T, h * d});
}

Tensor zero_padding(const Tensor& x, const Tensor& mask) {
  return mul(x, reshape(mask, {mask.dim(0), mask.dim(1), 1}));
}

}  // namespace uer::layers
