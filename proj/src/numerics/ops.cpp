#include "uer/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "uer/error.hpp"

namespace uer {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMat>;
using MutMat = Eigen::Map<RowMat>;

// C[M,N] += op(A) * op(B), where op(A) is [M,K] and op(B) is [K,N]. Operands
// are row-major; a transposed operand is stored with its extents swapped.
void gemm_acc(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const double* a, const double* b, double* c) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  MutMat cm(c, M, N);
  if (!trans_a && !trans_b) {
    cm.noalias() += ConstMat(a, M, K) * ConstMat(b, K, N);
  } else if (!trans_a && trans_b) {
    cm.noalias() += ConstMat(a, M, K) * ConstMat(b, N, K).transpose();
  } else if (trans_a && !trans_b) {
    cm.noalias() += ConstMat(a, K, M).transpose() * ConstMat(b, K, N);
  } else {
    cm.noalias() += ConstMat(a, K, M).transpose() * ConstMat(b, N, K).transpose();
  }
}

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ContractError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Output shape of a broadcast between `a` and `b`, plus for every output
// element the flat offset into each operand.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  const auto sa = strides_of(pa);
  const auto sb = strides_of(pb);
  const std::size_t n = shape_numel(plan.out);
  plan.ia.resize(n);
  plan.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      if (pa[d] != 1) oa += idx[d] * sa[d];
      if (pb[d] != 1) ob += idx[d] * sb[d];
    }
    plan.ia[flat] = oa;
    plan.ib[flat] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < plan.out[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), op));
  const std::size_t n = shape_numel(plan->out);
  std::vector<double> out(n);
  const auto ad = a.data();
  const auto bd = b.data();
  if (plan->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[plan->ia[i]], bd[plan->ib[i]]);
  }
  auto rule = [a, b, plan, da, db](std::span<const double> g, std::span<const double>, GradSlots grads) {
    const auto ad = a.data();
    const auto bd = b.data();
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ia = plan->same ? i : plan->ia[i];
      const std::size_t ib = plan->same ? i : plan->ib[i];
      if (grads[0]) (*grads[0])[ia] += g[i] * da(ad[ia], bd[ib]);
      if (grads[1]) (*grads[1])[ib] += g[i] * db(ad[ia], bd[ib]);
    }
  };
  return Tape::record(op, plan->out, std::move(out), {a, b}, rule);
}

// Elementwise map whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  auto rule = [x, deriv](std::span<const double> g, std::span<const double> y, GradSlots grads) {
    const auto xd = x.data();
    auto& gx = *grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xd[i], y[i]);
  };
  return Tape::record(op, x.shape(), std::move(out), {x}, rule);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        const double inner = kC * (v + kA * v * v * v);
        const double t = std::tanh(inner);
        const double dinner = kC * (1.0 + 3.0 * kA * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner;
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1);
  const std::size_t k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Broadcast plan;
  try {
    plan = plan_broadcast(batch_a.empty() ? Shape{1} : batch_a,
                          batch_b.empty() ? Shape{1} : batch_b, "matmul");
  } catch (const ShapeError&) {
    throw ShapeError("matmul: batch extents of " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not broadcast");
  }
  const std::size_t batches = shape_numel(plan.out);
  auto offsets = std::make_shared<std::vector<std::pair<std::size_t, std::size_t>>>(batches);
  for (std::size_t i = 0; i < batches; ++i) {
    (*offsets)[i] = plan.same ? std::pair{i, i} : std::pair{plan.ia[i], plan.ib[i]};
  }

  Shape out_shape;
  if (!(batch_a.empty() && batch_b.empty())) out_shape = plan.out;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(batches * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < batches; ++i) {
    const auto [oa, ob] = (*offsets)[i];
    gemm_acc(false, false, m, n, k, ad + oa * m * k, bd + ob * k * n, out.data() + i * m * n);
  }

  auto rule = [a, b, offsets, m, n, k](std::span<const double> g, std::span<const double>, GradSlots grads) {
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t i = 0; i < offsets->size(); ++i) {
      const auto [oa, ob] = (*offsets)[i];
      const double* gi = g.data() + i * m * n;
      // dA = dC B^T, dB = A^T dC
      if (grads[0]) gemm_acc(false, true, m, k, n, gi, bd + ob * k * n, grads[0]->data() + oa * m * k);
      if (grads[1]) gemm_acc(true, false, k, n, m, ad + oa * m * k, gi, grads[1]->data() + ob * k * n);
    }
  };
  return Tape::record("matmul", std::move(out_shape), std::move(out), {a, b}, rule);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> data(x.data().begin(), x.data().end());
  auto rule = [](std::span<const double> g, std::span<const double>, GradSlots grads) {
    auto& gx = *grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  };
  return Tape::record("reshape", std::move(shape), std::move(data), {x}, rule);
}

Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::int64_t> index) {
  if (shape_numel(out_shape) != index.size()) {
    throw ShapeError("gather: index count does not match " + shape_str(out_shape));
  }
  const auto xd = x.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::int64_t j = index[i];
    if (j >= static_cast<std::int64_t>(xd.size())) throw ContractError("gather: index out of range");
    out[i] = j < 0 ? 0.0 : xd[static_cast<std::size_t>(j)];
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  auto rule = [idx](std::span<const double> g, std::span<const double>, GradSlots grads) {
    auto& gx = *grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::int64_t j = (*idx)[i];
      if (j >= 0) gx[static_cast<std::size_t>(j)] += g[i];
    }
  };
  return Tape::record("gather", std::move(out_shape), std::move(out), {x}, rule);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  if (order.size() != in.size()) throw ContractError("permute: order rank mismatch");
  std::vector<bool> seen(in.size(), false);
  Shape out(in.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= in.size() || seen[order[i]]) throw ContractError("permute: invalid order");
    seen[order[i]] = true;
    out[i] = in[order[i]];
  }
  const auto in_strides = strides_of(in);
  const std::size_t n = x.numel();
  std::vector<std::int64_t> index(n);
  std::vector<std::size_t> idx(out.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < out.size(); ++d) src += idx[d] * in_strides[order[d]];
    index[flat] = static_cast<std::int64_t>(src);
    for (std::size_t d = out.size(); d-- > 0;) {
      if (++idx[d] < out[d]) break;
      idx[d] = 0;
    }
  }
  return gather(x, std::move(out), std::move(index));
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw ContractError("transpose_last: rank < 2");
  std::vector<std::size_t> order(x.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[order.size() - 1], order[order.size() - 2]);
  return permute(x, order);
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t a = norm_axis(axis, x.rank());
  const Shape& in = x.shape();
  if (length == 0 || start + length > in[a]) {
    throw ContractError("slice: range [" + std::to_string(start) + "," +
                        std::to_string(start + length) + ") outside " + shape_str(in));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= in[d];
  for (std::size_t d = a + 1; d < in.size(); ++d) inner *= in[d];
  Shape out = in;
  out[a] = length;
  const std::size_t extent = in[a];
  const auto xd = x.data();
  std::vector<double> data(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * extent + start) * inner),
                length * inner, data.begin() + static_cast<std::ptrdiff_t>(o * length * inner));
  }
  auto rule = [outer, inner, extent, start, length](std::span<const double> g, std::span<const double>, GradSlots grads) {
    auto& gx = *grads[0];
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = g.data() + o * length * inner;
      double* dst = gx.data() + (o * extent + start) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  };
  return Tape::record("slice", std::move(out), std::move(data), {x}, rule);
}

Tensor select(const Tensor& x, int axis, std::size_t index) {
  const std::size_t a = norm_axis(axis, x.rank());
  Tensor s = slice(x, static_cast<int>(a), index, 1);
  Shape out = x.shape();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(a));
  if (out.empty()) out.push_back(1);
  return reshape(s, std::move(out));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const std::size_t a = norm_axis(axis, parts[0].rank());
  Shape out = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != out.size()) throw ShapeError("concat: rank mismatch");
    s[a] = out[a];
    if (s != out) {
      throw ShapeError("concat: " + shape_str(p.shape()) + " incompatible with " +
                       shape_str(parts[0].shape()));
    }
    total += p.shape()[a];
  }
  out[a] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < a; ++d) outer *= out[d];
  for (std::size_t d = a + 1; d < out.size(); ++d) inner *= out[d];

  std::vector<double> data(shape_numel(out));
  std::vector<std::size_t> extents;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t e = p.shape()[a];
    extents.push_back(e);
    const auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * e * inner), e * inner,
                  data.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    }
    offset += e;
  }
  auto rule = [extents, outer, inner, total](std::span<const double> g, std::span<const double>, GradSlots grads) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const std::size_t e = extents[p];
      if (grads[p]) {
        auto& gp = *grads[p];
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g.data() + (o * total + offset) * inner;
          double* dst = gp.data() + o * e * inner;
          for (std::size_t i = 0; i < e * inner; ++i) dst[i] += src[i];
        }
      }
      offset += e;
    }
  };
  return Tape::record("concat", std::move(out), std::move(data), parts, rule);
}

Tensor stack(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("stack: no inputs");
  const std::size_t a = norm_axis(axis, parts[0].rank() + 1);
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(a), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, static_cast<int>(a));
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& id_shape,
                 int padding_id) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V,H], got " + shape_str(table.shape()));
  if (shape_numel(id_shape) != ids.size()) throw ShapeError("embedding: id shape mismatch");
  const std::size_t v = table.dim(0), h = table.dim(1);
  const auto td = table.data();
  std::vector<double> out(ids.size() * h);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                          std::to_string(v));
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * h), h,
                out.begin() + static_cast<std::ptrdiff_t>(i * h));
  }
  Shape out_shape = id_shape;
  out_shape.push_back(h);
  auto id_copy = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  auto rule = [id_copy, h, padding_id](std::span<const double> g, std::span<const double>, GradSlots grads) {
    auto& gt = *grads[0];
    for (std::size_t i = 0; i < id_copy->size(); ++i) {
      const int id = (*id_copy)[i];
      if (id == padding_id) continue;
      double* dst = gt.data() + static_cast<std::size_t>(id) * h;
      const double* src = g.data() + i * h;
      for (std::size_t j = 0; j < h; ++j) dst[j] += src[j];
    }
  };
  return Tape::record("embedding", std::move(out_shape), std::move(out), {table}, rule);
}

namespace {

struct AxisLayout {
  std::size_t outer, extent, inner;
};

AxisLayout layout_for(const Shape& shape, std::size_t axis) {
  AxisLayout l{1, shape[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) l.outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
  return l;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t a = norm_axis(axis, x.rank());
  const AxisLayout l = layout_for(x.shape(), a);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < l.extent; ++e) mx = std::max(mx, xd[base + e * l.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) {
        const double v = std::exp(xd[base + e * l.inner] - mx);
        out[base + e * l.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < l.extent; ++e) out[base + e * l.inner] /= total;
    }
  }
  auto rule = [l](std::span<const double> g, std::span<const double> y, GradSlots grads) {
    auto& gx = *grads[0];
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.extent * l.inner + i;
        double dot = 0.0;
        for (std::size_t e = 0; e < l.extent; ++e) {
          dot += g[base + e * l.inner] * y[base + e * l.inner];
        }
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t p = base + e * l.inner;
          gx[p] += y[p] * (g[p] - dot);
        }
      }
    }
  };
  return Tape::record("softmax", x.shape(), std::move(out), {x}, rule);
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t a = norm_axis(axis, x.rank());
  const AxisLayout l = layout_for(x.shape(), a);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < l.extent; ++e) mx = std::max(mx, xd[base + e * l.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < l.extent; ++e) total += std::exp(xd[base + e * l.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t e = 0; e < l.extent; ++e) {
        out[base + e * l.inner] = xd[base + e * l.inner] - lse;
      }
    }
  }
  auto rule = [l](std::span<const double> g, std::span<const double> y, GradSlots grads) {
    auto& gx = *grads[0];
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.extent * l.inner + i;
        double gsum = 0.0;
        for (std::size_t e = 0; e < l.extent; ++e) gsum += g[base + e * l.inner];
        for (std::size_t e = 0; e < l.extent; ++e) {
          const std::size_t p = base + e * l.inner;
          gx[p] += g[p] - std::exp(y[p]) * gsum;
        }
      }
    }
  };
  return Tape::record("log_softmax", x.shape(), std::move(out), {x}, rule);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t h = x.dim(-1);
  if (gamma.shape() != Shape{h} || beta.shape() != Shape{h}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(h) + "], got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / h;
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  // Normalized values and inverse standard deviations are kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * h;
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += row[j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < h; ++j) {
      const double n = (row[j] - mu) * is;
      (*xhat)[r * h + j] = n;
      out[r * h + j] = gd[j] * n + bd[j];
    }
  }
  auto rule = [gamma, xhat, inv_std, rows, h](std::span<const double> g, std::span<const double>, GradSlots grads) {
    const auto gd = gamma.data();
    const double hd = static_cast<double>(h);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = g.data() + r * h;
      const double* nr = xhat->data() + r * h;
      if (grads[1]) {
        for (std::size_t j = 0; j < h; ++j) (*grads[1])[j] += gr[j] * nr[j];
      }
      if (grads[2]) {
        for (std::size_t j = 0; j < h; ++j) (*grads[2])[j] += gr[j];
      }
      if (grads[0]) {
        double sum_d = 0.0, sum_dn = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
          const double d = gr[j] * gd[j];
          sum_d += d;
          sum_dn += d * nr[j];
        }
        double* gx = grads[0]->data() + r * h;
        const double is = (*inv_std)[r];
        for (std::size_t j = 0; j < h; ++j) {
          const double d = gr[j] * gd[j];
          gx[j] += is * (d - sum_d / hd - nr[j] * sum_dn / hd);
        }
      }
    }
  };
  return Tape::record("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, rule);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, int ignore_id) {
  if (logits.rank() != 2) {
    throw ShapeError("cross_entropy: logits must be [N,V], got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  std::size_t counted = 0;
  for (int y : labels) {
    if (y == ignore_id) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                          std::to_string(v) + ")");
    }
    ++counted;
  }
  if (counted == 0) throw EmptyLossError("cross_entropy: every position is ignored");

  const auto xd = logits.data();
  auto probs = std::make_shared<std::vector<double>>(xd.size(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] == ignore_id) continue;
    const double* row = xd.data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[labels[r]];
    for (std::size_t j = 0; j < v; ++j) (*probs)[r * v + j] = std::exp(row[j] - lse);
  }
  const double inv = 1.0 / static_cast<double>(counted);
  auto label_copy = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  auto rule = [probs, label_copy, n, v, inv, ignore_id](std::span<const double> g, std::span<const double>, GradSlots grads) {
    auto& gx = *grads[0];
    const double s = g[0] * inv;
    for (std::size_t r = 0; r < n; ++r) {
      const int y = (*label_copy)[r];
      if (y == ignore_id) continue;
      for (std::size_t j = 0; j < v; ++j) gx[r * v + j] += s * (*probs)[r * v + j];
      gx[r * v + static_cast<std::size_t>(y)] -= s;
    }
  };
  return Tape::record("cross_entropy", {1}, {total * inv}, {logits}, rule);
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  double total = 0.0;
  for (double v : xd) total += v;
  auto rule = [](std::span<const double> g, std::span<const double>, GradSlots grads) {
    for (double& v : *grads[0]) v += g[0];
  };
  return Tape::record("sum", {1}, {total}, {x}, rule);
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

namespace {

void check_pool_args(const Tensor& x, const Tensor& mask, const char* op) {
  if (x.rank() != 3 || mask.rank() != 2 || mask.dim(0) != x.dim(0) || mask.dim(1) != x.dim(1)) {
    throw ShapeError(std::string(op) + ": expected x [N,L,H] and mask [N,L], got " +
                     shape_str(x.shape()) + " and " + shape_str(mask.shape()));
  }
}

}  // namespace

Tensor masked_mean(const Tensor& x, const Tensor& mask) {
  check_pool_args(x, mask, "masked_mean");
  const std::size_t n = x.dim(0), len = x.dim(1), h = x.dim(2);
  const auto xd = x.data();
  const auto md = mask.data();
  auto weights = std::make_shared<std::vector<double>>(n * len, 0.0);
  std::vector<double> out(n * h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double count = 0.0;
    for (std::size_t t = 0; t < len; ++t) count += md[i * len + t] != 0.0 ? 1.0 : 0.0;
    if (count == 0.0) continue;
    for (std::size_t t = 0; t < len; ++t) {
      if (md[i * len + t] == 0.0) continue;
      (*weights)[i * len + t] = 1.0 / count;
      for (std::size_t j = 0; j < h; ++j) out[i * h + j] += xd[(i * len + t) * h + j];
    }
    for (std::size_t j = 0; j < h; ++j) out[i * h + j] /= count;
  }
  auto rule = [weights, n, len, h](std::span<const double> g, std::span<const double>, GradSlots grads) {
    auto& gx = *grads[0];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < len; ++t) {
        const double w = (*weights)[i * len + t];
        if (w == 0.0) continue;
        for (std::size_t j = 0; j < h; ++j) gx[(i * len + t) * h + j] += w * g[i * h + j];
      }
    }
  };
  return Tape::record("masked_mean", {n, h}, std::move(out), {x}, rule);
}

Tensor masked_max(const Tensor& x, const Tensor& mask) {
  check_pool_args(x, mask, "masked_max");
  const std::size_t n = x.dim(0), len = x.dim(1), h = x.dim(2);
  const auto xd = x.data();
  const auto md = mask.data();
  std::vector<std::int64_t> index(n * h, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      std::int64_t best = -1;
      for (std::size_t t = 0; t < len; ++t) {
        if (md[i * len + t] == 0.0) continue;
        const std::size_t p = (i * len + t) * h + j;
        if (best < 0 || xd[p] > xd[static_cast<std::size_t>(best)]) best = static_cast<std::int64_t>(p);
      }
      index[i * h + j] = best;
    }
  }
  return gather(x, {n, h}, std::move(index));
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> m(x.numel());
  const double s = 1.0 / (1.0 - rate);
  for (double& v : m) v = keep(rng) ? s : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(m)));
}

}  // namespace uer
