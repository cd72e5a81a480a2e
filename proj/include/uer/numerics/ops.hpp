#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "uer/numerics/tensor.hpp"

namespace uer {

// Label value excluded from every loss.
inline constexpr int kIgnoreId = -1;

// Elementwise arithmetic with numpy-style broadcasting (extents aligned on the
// right; an extent of 1 stretches).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// [..., M, K] x [..., K, N] -> [..., M, N]; leading (batch) extents broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x W + bias, with W [in, out] and bias [out]. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose_last(const Tensor& x);

// Half-open range [start, start + length) along `axis`.
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
// Drops `axis`.
Tensor select(const Tensor& x, int axis, std::size_t index);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Inserts a new axis at `axis`.
Tensor stack(const std::vector<Tensor>& parts, int axis);

// out[i] = x.flat[index[i]], or 0 where index[i] < 0. Gradients scatter back.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::int64_t> index);

// Rows of `table` [V, H] for every id; output shape is id_shape + [H]. Rows
// looked up with `padding_id` receive no gradient.
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& id_shape,
                 int padding_id = -1);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// Normalizes over the last axis, then applies gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-12);

// Mean negative log-likelihood over rows whose label != ignore_id.
// Throws EmptyLossError when every row is ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, int ignore_id = kIgnoreId);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Pooling over axis 1 of x [N, L, H] using mask [N, L] (1 keeps a position).
// Rows with no kept position pool to zero.
Tensor masked_mean(const Tensor& x, const Tensor& mask);
Tensor masked_max(const Tensor& x, const Tensor& mask);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace uer
