#include "uer/layers/conv.hpp"

#include "uer/error.hpp"

namespace uer::layers {

Tensor unfold_windows(const Tensor& x, std::size_t kernel, bool causal) {
  if (x.rank() != 3) throw ShapeError("unfold expects [N, L, C], got " + shape_str(x.shape()));
  if (!causal && kernel % 2 == 0) {
    throw ConfigError("centered convolution needs an odd kernel width, got " + std::to_string(kernel));
  }
  const std::size_t N = x.dim(0), L = x.dim(1), C = x.dim(2);
  const auto offset = static_cast<std::int64_t>(causal ? kernel - 1 : kernel / 2);
  std::vector<std::int64_t> index(N * L * kernel * C);
  std::size_t k = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::int64_t s = static_cast<std::int64_t>(t + j) - offset;
        const bool inside = s >= 0 && s < static_cast<std::int64_t>(L);
        for (std::size_t c = 0; c < C; ++c) {
          index[k++] = inside ? static_cast<std::int64_t>((n * L + static_cast<std::size_t>(s)) * C + c) : -1;
        }
      }
    }
  }
  return gather(x, {N, L, kernel * C}, std::move(index));
}

Conv1d::Conv1d(std::size_t in, std::size_t out, std::size_t kernel, Init& init) : kernel_(kernel) {
  if (kernel == 0) throw ConfigError("kernel width must be positive");
  map_ = &add_module("map", std::make_unique<Linear>(kernel * in, out, init));
}

Tensor Conv1d::forward(const Tensor& x, bool causal) const {
  return map_->forward(unfold_windows(x, kernel_, causal));
}

}  // namespace uer::layers
