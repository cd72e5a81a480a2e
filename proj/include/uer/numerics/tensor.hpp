#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  // Set when the tensor is the output of a node recorded on `tape`.
  const Tape* tape = nullptr;
  std::size_t node = 0;
};

}  // namespace detail

// Dense row-major float64 tensor with shared handle semantics: copies of a
// Tensor alias the same storage. Values are treated as immutable once an
// operation has consumed them; only parameters are updated in place, by the
// optimizer or by checkpoint loading.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Gradient values, zeros when nothing has been accumulated.
  std::vector<double> grad_or_zeros() const;
  void zero_grad();

  // Deep copy of values only; the result is a fresh leaf.
  Tensor detach() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& shared_impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend class Tape;
};

// Gradient buffers handed to a backward rule: one per input, null when that
// input does not need a gradient. Rules accumulate (+=) into them.
using GradSlots = std::span<std::vector<double>* const>;
using BackwardRule = std::function<void(std::span<const double> grad_out,
                                        std::span<const double> output, GradSlots grads)>;

// Records differentiable operations in execution order. Construction makes the
// tape active for the current thread; destruction restores the previous one.
// Operations executed while no tape is active are not recorded and produce
// tensors that do not require gradients.
class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardRule rule;
    std::string op;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // Builds the output tensor of an operation. When any input requires a
  // gradient and this tape is active, the node is recorded.
  static Tensor record(const char* op, Shape shape, std::vector<double> data,
                       std::vector<Tensor> inputs, BackwardRule rule);

  // Populates dLoss/dLeaf for every reachable leaf that requires a gradient.
  // Leaf gradients accumulate across calls; intermediate ones do not.
  void backward(const Tensor& loss) const;

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  Tape* previous_;
};

// Convenience for the active tape.
void backward(const Tensor& loss);

}  // namespace uer
