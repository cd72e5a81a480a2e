#include "uer/layers/module.hpp"

namespace uer {

Tensor apply_dropout(const Tensor& x, double rate, const Context& ctx) {
  if (!ctx.training || ctx.rng == nullptr || rate <= 0) return x;
  return dropout(x, rate, *ctx.rng);
}

Tensor Init::normal(Shape shape) {
  std::normal_distribution<double> dist(0.0, stddev_);
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = dist(rng_);
  return Tensor::from(std::move(shape), std::move(data));
}

Tensor Init::zeros(Shape shape) { return Tensor::zeros(std::move(shape)); }

Tensor Init::ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

std::vector<NamedTensor> Module::named_parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  collect(prefix, out);
  return out;
}

void Module::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (const Entry& e : entries_) {
    const std::string name = prefix.empty() ? e.name : prefix + "." + e.name;
    if (e.child) {
      e.child->collect(name, out);
    } else {
      out.push_back({name, e.parameter});
    }
  }
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.value);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (auto& p : named_parameters()) n += p.value.numel();
  return n;
}

Tensor Module::add_parameter(std::string name, Tensor value) {
  value.set_requires_grad(true);
  entries_.push_back({std::move(name), value, nullptr});
  return value;
}

namespace layers {

Linear::Linear(std::size_t in, std::size_t out, Init& init, bool bias) {
  weight_ = add_parameter("weight", init.normal({in, out}));
  if (bias) bias_ = add_parameter("bias", Init::zeros({out}));
}

LayerNorm::LayerNorm(std::size_t width) {
  gamma_ = add_parameter("gamma", Init::ones({width}));
  beta_ = add_parameter("beta", Init::zeros({width}));
}

}  // namespace layers
}  // namespace uer
