#pragma once

#include "uer/layers/module.hpp"

namespace uer::layers {

inline constexpr double kMaskedLogit = -1e9;

// Additive attention bias [B, 1, Tq, Tk] from key_mask [B, Tk] (1 = real
// token): 0 where the query may look, kMaskedLogit elsewhere. Causal adds the
// constraint key <= query.
Tensor attention_bias(const Tensor& key_mask, std::size_t query_length, bool causal);

// softmax(q k^T / sqrt(d) + bias) v for q [.., Tq, d], k/v [.., Tk, d].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias);

// [B, T, h*d] <-> [B, h, T, d]
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

// Multiplies x [B, T, H] by mask [B, T] so padded positions are exactly zero.
Tensor zero_padding(const Tensor& x, const Tensor& mask);

}  // namespace uer::layers
