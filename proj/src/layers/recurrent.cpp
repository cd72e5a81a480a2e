#include "uer/layers/recurrent.hpp"

namespace uer::layers {

RecurrentCell::RecurrentCell(CellKind kind, std::size_t input, std::size_t hidden, Init& init)
    : kind_(kind), hidden_(hidden) {
  const std::size_t g = gates();
  input_ = &add_module("input", std::make_unique<Linear>(input, g * hidden, init));
  hidden_map_ = &add_module("hidden", std::make_unique<Linear>(hidden, g * hidden, init));
}

RecurrentCell::State RecurrentCell::step(const Tensor& xw, const State& prev) const {
  const std::size_t H = hidden_;
  const Tensor hw = hidden_map_->forward(prev.h);
  if (kind_ == CellKind::kLstm) {
    const Tensor z = add(xw, hw);
    const Tensor i = sigmoid(slice(z, -1, 0, H));
    const Tensor f = sigmoid(slice(z, -1, H, H));
    const Tensor g = uer::tanh(slice(z, -1, 2 * H, H));
    const Tensor o = sigmoid(slice(z, -1, 3 * H, H));
    const Tensor c = add(mul(f, prev.c), mul(i, g));
    return {mul(o, uer::tanh(c)), c};
  }
  const Tensor r = sigmoid(add(slice(xw, -1, 0, H), slice(hw, -1, 0, H)));
  const Tensor z = sigmoid(add(slice(xw, -1, H, H), slice(hw, -1, H, H)));
  const Tensor n = uer::tanh(add(slice(xw, -1, 2 * H, H), mul(r, slice(hw, -1, 2 * H, H))));
  // (1 - z) n + z h == n + z (h - n)
  return {add(n, mul(z, sub(prev.h, n))), Tensor()};
}

Tensor RecurrentCell::run(const Tensor& x, const Tensor& mask, bool reverse, const Tensor& initial) const {
  const std::size_t N = x.dim(0), L = x.dim(1);
  const Tensor xw = input_->forward(x);
  State state{initial.defined() ? initial : Tensor::zeros({N, hidden_}), Tensor()};
  if (kind_ == CellKind::kLstm) state.c = Tensor::zeros({N, hidden_});
  std::vector<Tensor> outputs(L);
  for (std::size_t s = 0; s < L; ++s) {
    const std::size_t t = reverse ? L - 1 - s : s;
    const Tensor m = slice(mask, 1, t, 1);  // [N, 1]
    const Tensor keep = add_scalar(neg(m), 1.0);
    State next = step(select(xw, 1, t), state);
    // m is exactly 0 or 1, so these blends copy one side bit for bit.
    state.h = add(mul(m, next.h), mul(keep, state.h));
    if (kind_ == CellKind::kLstm) state.c = add(mul(m, next.c), mul(keep, state.c));
    outputs[t] = mul(m, state.h);
  }
  return stack(outputs, 1);
}

}  // namespace uer::layers
