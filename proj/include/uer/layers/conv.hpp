#pragma once

#include "uer/layers/module.hpp"

namespace uer::layers {

// Unfolds x [N, L, C] into windows [N, L, K*C]; window t holds positions
// t-K/2 .. t+K/2 (centered) or t-K+1 .. t (causal), zero outside [0, L).
Tensor unfold_windows(const Tensor& x, std::size_t kernel, bool causal);

// 1-d convolution over axis 1 as unfold + matmul. The weight [K*in, out] is
// indexed by (offset * in + channel).
class Conv1d : public Module {
 public:
  Conv1d(std::size_t in, std::size_t out, std::size_t kernel, Init& init);
  Tensor forward(const Tensor& x, bool causal) const;
  std::size_t kernel() const { return kernel_; }
  const Tensor& weight() const { return map_->weight(); }
  const Tensor& bias() const { return map_->bias(); }

 private:
  std::size_t kernel_;
  Linear* map_;
};

}  // namespace uer::layers
