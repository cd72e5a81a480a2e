#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "uer/numerics/ops.hpp"
#include "uer/numerics/tensor.hpp"

namespace uer {

// Per-call forward settings. Dropout only fires when training and an rng is set.
struct Context {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

Tensor apply_dropout(const Tensor& x, double rate, const Context& ctx);

// Parameter source. Values are drawn in construction order, so a model built
// twice from the same seed starts bit-identical.
class Init {
 public:
  explicit Init(std::uint64_t seed, double stddev = 0.02) : rng_(seed), stddev_(stddev) {}
  Tensor normal(Shape shape);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);

 private:
  std::mt19937_64 rng_;
  double stddev_;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Owns named parameters and child modules; names compose with dots.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  // Registration order, depth first.
  std::vector<NamedTensor> named_parameters(const std::string& prefix = "") const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

 protected:
  Tensor add_parameter(std::string name, Tensor value);
  template <typename M>
  M& add_module(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    entries_.push_back({std::move(name), Tensor(), std::move(module)});
    return ref;
  }

 private:
  struct Entry {
    std::string name;
    Tensor parameter;
    std::unique_ptr<Module> child;
  };
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  std::vector<Entry> entries_;
};

namespace layers {

// y = x W + b with W [in, out].
class Linear : public Module {
 public:
  Linear(std::size_t in, std::size_t out, Init& init, bool bias = true);
  Tensor forward(const Tensor& x) const { return linear(x, weight_, bias_); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  std::size_t in() const { return weight_.dim(0); }
  std::size_t out() const { return weight_.dim(1); }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::size_t width);
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma_, beta_); }
  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }

 private:
  Tensor gamma_;
  Tensor beta_;
};

}  // namespace layers
}  // namespace uer
