#include "uer/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "uer/numerics/ops.hpp"

namespace uer {

namespace {

Tensor reduced(const Tensor& y) { return y.numel() == 1 ? y : sum(y); }

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-8);
}

// Central difference at coordinate `i` of `values`, divided by the step that
// is actually representable around the saved value.
template <class Eval>
double central_difference(std::span<double> values, std::size_t i, double h, Eval eval) {
  const double saved = values[i];
  const double plus = saved + h;
  const double minus = saved - h;
  values[i] = plus;
  const double up = eval();
  values[i] = minus;
  const double down = eval();
  values[i] = saved;
  return (up - down) / (plus - minus);
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& op, const Tensor& input,
                               double h) {
  Tensor x = Tensor::from(input.shape(), std::vector<double>(input.data().begin(), input.data().end()),
                          true);
  {
    Tape tape;
    Tensor y = reduced(op(x));
    tape.backward(y);
  }
  const std::vector<double> analytic = x.grad_or_zeros();
  auto values = x.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double numeric = central_difference(values, i, h, [&] { return reduced(op(x)).item(); });
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

double gradient_check(const std::function<Tensor()>& loss, std::span<Tensor> wrt, double h) {
  for (Tensor& t : wrt) t.zero_grad();
  {
    Tape tape;
    Tensor y = reduced(loss());
    tape.backward(y);
  }
  double worst = 0.0;
  for (Tensor& t : wrt) {
    const std::vector<double> analytic = t.grad_or_zeros();
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double numeric = central_difference(values, i, h, [&] { return reduced(loss()).item(); });
      worst = std::max(worst, relative_error(analytic[i], numeric));
    }
  }
  return worst;
}

}  // namespace uer
