#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "uer/numerics/tensor.hpp"

namespace uer {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers for an ordered parameter list, plus the shared step counter.
struct AdamState {
  AdamHyper hyper;
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  // Zero moments sized to match `params`.
  static AdamState for_parameters(std::span<const Tensor> params, AdamHyper hyper = {});
};

// One bias-corrected Adam update of every parameter; increments state.t.
// grads[i] must match params[i] in size, as must the moment buffers.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state);

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before scaling.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

// Learning rate after linear warmup over `warmup_steps` updates (0 disables).
double warmup_lr(double base_lr, std::size_t step, std::size_t warmup_steps);

}  // namespace uer
