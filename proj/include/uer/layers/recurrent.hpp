#pragma once

#include "uer/layers/module.hpp"

namespace uer::layers {

enum class CellKind { kLstm, kGru };

// Gate layout follows the usual convention: LSTM [i, f, g, o], GRU [r, z, n].
//   LSTM: c' = s(f) c + s(i) tanh(g);  h' = s(o) tanh(c')
//   GRU:  n = tanh(x_n + s(r) * (W_hn h + b_hn));  h' = (1 - s(z)) n + s(z) h
class RecurrentCell : public Module {
 public:
  RecurrentCell(CellKind kind, std::size_t input, std::size_t hidden, Init& init);

  CellKind kind() const { return kind_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t gates() const { return kind_ == CellKind::kLstm ? 4 : 3; }
  const Linear& input_map() const { return *input_; }
  const Linear& hidden_map() const { return *hidden_map_; }

  // Runs over axis 1 of x [N, L, in]. Where mask [N, L] is 0 the state is
  // carried unchanged and the output is zero. `initial` [N, H] seeds the
  // hidden state (zeros when undefined).
  Tensor run(const Tensor& x, const Tensor& mask, bool reverse = false, const Tensor& initial = {}) const;

  // One step from precomputed input projection xw [N, gates*H].
  struct State {
    Tensor h;
    Tensor c;  // LSTM only
  };
  State step(const Tensor& xw, const State& prev) const;

 private:
  CellKind kind_;
  std::size_t hidden_;
  Linear* input_;
  Linear* hidden_map_;
};

}  // namespace uer::layers
