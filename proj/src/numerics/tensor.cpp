#include "uer/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "uer/error.hpp"

namespace uer {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_numel(shape), value);
  return from(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ContractError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= impl_->shape[axis]) throw ContractError("index out of range for " + shape_str(shape()));
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  if (!value) impl_->grad.clear();
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::vector<double> Tensor::grad_or_zeros() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  g_active_tape = previous_;
  // Outputs that outlive the tape become plain constants.
  for (Node& node : nodes_) {
    node.output->tape = nullptr;
    node.output->requires_grad = false;
  }
}

Tape* Tape::active() { return g_active_tape; }

Tensor Tape::record(const char* op, Shape shape, std::vector<double> data,
                    std::vector<Tensor> inputs, BackwardRule rule) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;

  Node node;
  node.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node.inputs.push_back(t.shared_impl());
  node.output = out.shared_impl();
  node.rule = std::move(rule);
  node.op = op;
  out.impl_->requires_grad = true;
  out.impl_->tape = tape;
  out.impl_->node = tape->nodes_.size();
  tape->nodes_.push_back(std::move(node));
  return out;
}

void Tape::backward(const Tensor& loss) const {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss");
  }
  detail::TensorImpl* root = loss.impl();
  if (root->tape != this) {
    throw ContractError("backward(): loss was not recorded on this tape");
  }

  std::vector<std::vector<double>> node_grads(nodes_.size());
  node_grads[root->node].assign(1, 1.0);

  std::vector<std::vector<double>*> slots;
  for (std::size_t i = root->node + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node_grads[i].empty()) continue;

    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      detail::TensorImpl* in = node.inputs[k].get();
      if (!in->requires_grad) continue;
      std::vector<double>* buf;
      if (in->tape == this) {
        buf = &node_grads[in->node];
      } else {
        buf = &in->grad;
      }
      if (buf->empty()) buf->assign(in->data.size(), 0.0);
      slots[k] = buf;
    }
    node.rule(node_grads[i], node.output->data, GradSlots(slots.data(), slots.size()));
    // Free intermediate gradients as soon as they have been propagated.
    std::vector<double>().swap(node_grads[i]);
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw ContractError("backward() called without an active tape");
  tape->backward(loss);
}

}  // namespace uer
