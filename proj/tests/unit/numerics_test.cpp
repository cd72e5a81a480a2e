#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "uer/error.hpp"
#include "uer/numerics/adam.hpp"
#include "uer/numerics/gradcheck.hpp"
#include "uer/numerics/ops.hpp"

namespace uer {
namespace {

using testing::random_tensor;
using testing::random_weights;

// Naive triple loop, independent of the Eigen-backed kernel.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
  return c;
}

TEST(Matmul, IdentityAndHandSum) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor c = matmul(a, eye);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{1, 2, 3, 4}));

  Tensor row = Tensor::from({1, 3}, {1, 1, 1});
  Tensor col = Tensor::from({3, 1}, {2, 3, 4});
  EXPECT_DOUBLE_EQ(matmul(row, col).item(), 9.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(3);
  Tensor a = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({5, 3}, rng);
  const auto expected = naive_matmul(a, b);
  Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(c.data()[i], expected[i], 1e-12);
}

TEST(Matmul, BroadcastsBatchExtents) {
  std::mt19937_64 rng(4);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  Tensor c = matmul(a, w);
  ASSERT_EQ(c.shape(), (Shape{2, 3, 2}));
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor slice_b = select(a, 0, b);
    const auto expected = naive_matmul(slice_b, w);
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(c.data()[b * 6 + i], expected[i], 1e-12);
  }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,2]"), std::string::npos);
  }
}

TEST(Softmax, UniformAndStable) {
  Tensor u = softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  Tensor s = softmax(Tensor::from({2}, {1000, 0}), 0);
  EXPECT_TRUE(std::isfinite(s.data()[0]));
  EXPECT_NEAR(s.data()[0], 1.0, 1e-15);
  EXPECT_NEAR(s.data()[1], 0.0, 1e-15);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({7}, rng, -3.0, 3.0);
  long double z = 0.0L;
  for (double v : x.data()) z += std::exp(static_cast<long double>(v));
  Tensor y = softmax(x, 0);
  for (std::size_t i = 0; i < 7; ++i) {
    const double expected = static_cast<double>(std::exp(static_cast<long double>(x.data()[i])) / z);
    EXPECT_NEAR(y.data()[i], expected, 1e-12);
  }
}

TEST(Softmax, SlicesSumToOneOnAnyAxis) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({3, 4, 5}, rng, -50.0, 50.0);
    for (int axis = 0; axis < 3; ++axis) {
      Tensor y = softmax(x, axis);
      const std::size_t ax = static_cast<std::size_t>(axis);
      const Shape& s = x.shape();
      std::vector<double> sums(x.numel() / s[ax], 0.0);
      std::size_t inner = 1;
      for (std::size_t d = ax + 1; d < 3; ++d) inner *= s[d];
      for (std::size_t i = 0; i < x.numel(); ++i) {
        const std::size_t outer = i / (inner * s[ax]);
        sums[outer * inner + i % inner] += y.data()[i];
      }
      for (double v : sums) EXPECT_NEAR(v, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, ConstantRowAndZeroGamma) {
  Tensor ones = Tensor::full({4}, 1.0);
  Tensor zeros = Tensor::zeros({4});
  Tensor y = layer_norm(Tensor::full({2, 4}, 3.5), ones, zeros);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);

  std::mt19937_64 rng(7);
  Tensor beta = random_tensor({4}, rng);
  Tensor z = layer_norm(random_tensor({3, 4}, rng), zeros, beta);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_DOUBLE_EQ(z.data()[i], beta.data()[i % 4]);
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  std::mt19937_64 rng(8);
  const std::size_t h = 6;
  Tensor x = random_tensor({2, h}, rng, -4.0, 4.0);
  Tensor gamma = random_tensor({h}, rng);
  Tensor beta = random_tensor({h}, rng);
  const double eps = 1e-12;
  Tensor y = layer_norm(x, gamma, beta, eps);
  for (std::size_t r = 0; r < 2; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += x.data()[r * h + j];
    mu /= h;
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += std::pow(x.data()[r * h + j] - mu, 2);
    var /= h;
    for (std::size_t j = 0; j < h; ++j) {
      const double expected = gamma.data()[j] * (x.data()[r * h + j] - mu) / std::sqrt(var + eps) + beta.data()[j];
      EXPECT_NEAR(y.data()[r * h + j], expected, 1e-10);
    }
  }
}

TEST(CrossEntropy, AnalyticCases) {
  Tensor uniform = Tensor::zeros({3, 8});
  std::vector<int> labels{1, 5, 7};
  EXPECT_NEAR(cross_entropy(uniform, labels).item(), std::log(8.0), 1e-12);
  EXPECT_NEAR(std::log(8.0), 2.07944, 1e-5);

  std::vector<double> peaked(5, 0.0);
  peaked[2] = 1e6;
  std::vector<int> one{2};
  EXPECT_NEAR(cross_entropy(Tensor::from({1, 5}, peaked), one).item(), 0.0, 1e-12);
}

TEST(CrossEntropy, MatchesLogSoftmaxGatherOracle) {
  std::mt19937_64 rng(9);
  Tensor logits = random_tensor({3, 5}, rng, -2.0, 2.0);
  std::vector<int> labels{4, kIgnoreId, 0};
  double total = 0.0;
  for (std::size_t r : {0u, 2u}) {
    double z = 0.0;
    for (std::size_t j = 0; j < 5; ++j) z += std::exp(logits.data()[r * 5 + j]);
    total += -(logits.data()[r * 5 + static_cast<std::size_t>(labels[r])] - std::log(z));
  }
  EXPECT_NEAR(cross_entropy(logits, labels).item(), total / 2.0, 1e-10);
}

TEST(CrossEntropy, AllIgnoredIsExplicitError) {
  std::vector<int> labels{kIgnoreId, kIgnoreId};
  EXPECT_THROW(cross_entropy(Tensor::zeros({2, 3}), labels), EmptyLossError);
}

TEST(CrossEntropy, RejectsOutOfRangeLabel) {
  std::vector<int> labels{3};
  EXPECT_THROW(cross_entropy(Tensor::zeros({1, 3}), labels), ContractError);
}

TEST(Backward, AnalyticGradients) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  {
    Tape tape;
    tape.backward(sum(mul(x, x)));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);

  Tensor a = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor b = Tensor::from({2}, {1.0, -1.0}, true);
  {
    Tape tape;
    Tensor loss = sum(mul(b, b));
    tape.backward(loss);
  }
  for (double g : a.grad_or_zeros()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor y = mul(x, x);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, RepeatedCallsAccumulateAndResetIsDeterministic) {
  std::mt19937_64 rng(10);
  Tensor w = random_tensor({3, 3}, rng, -1, 1, true);
  Tensor x = random_tensor({2, 3}, rng);
  Tape tape;
  Tensor loss = sum(tanh(matmul(x, w)));
  tape.backward(loss);
  const auto first = w.grad_or_zeros();
  tape.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], 2.0 * first[i]);
  w.zero_grad();
  tape.backward(loss);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(w.grad()[i], first[i]);
}

TEST(Backward, NoTapeMeansNoRecording) {
  Tensor x = Tensor::from({1}, {2.0}, true);
  Tensor y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<Tensor> params{Tensor::from({3}, {1.0, -2.0, 0.5}, true)};
  auto state = AdamState::for_parameters(params, {.lr = 0.1});
  std::vector<std::vector<double>> grads{{0.0, 0.0, 0.0}};
  adam_step(params, grads, state);
  EXPECT_EQ(state.t, 1u);
  EXPECT_EQ(std::vector<double>(params[0].data().begin(), params[0].data().end()),
            (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  std::vector<Tensor> params{Tensor::from({2}, {0.0, 0.0}, true)};
  auto state = AdamState::for_parameters(params, {.lr = 0.01});
  std::vector<std::vector<double>> grads{{3.7, -0.2}};
  adam_step(params, grads, state);
  EXPECT_NEAR(params[0].data()[0], -0.01, 1e-9);
  EXPECT_NEAR(params[0].data()[1], 0.01, 1e-9);
}

TEST(Adam, ThreeStepTrajectoryMatchesScalarOracle) {
  // f(w) = (w - 2)^2 from w = 0.
  const AdamHyper hyper{.lr = 0.05, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8};
  double w = 0.0, m = 0.0, v = 0.0;
  std::vector<double> oracle;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * (w - 2.0);
    m = hyper.beta1 * m + (1 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1 - hyper.beta2) * g * g;
    const double mh = m / (1 - std::pow(hyper.beta1, t));
    const double vh = v / (1 - std::pow(hyper.beta2, t));
    w -= hyper.lr * mh / (std::sqrt(vh) + hyper.epsilon);
    oracle.push_back(w);
  }

  std::vector<Tensor> params{Tensor::from({1}, {0.0}, true)};
  auto state = AdamState::for_parameters(params, hyper);
  for (int t = 0; t < 3; ++t) {
    params[0].zero_grad();
    {
      Tape tape;
      Tensor d = add_scalar(params[0], -2.0);
      tape.backward(sum(mul(d, d)));
    }
    std::vector<std::vector<double>> grads{params[0].grad_or_zeros()};
    adam_step(params, grads, state);
    EXPECT_NEAR(params[0].item(), oracle[static_cast<std::size_t>(t)], 1e-12);
  }
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  std::mt19937_64 rng(11);
  std::vector<Tensor> params{random_tensor({4, 4}, rng, -1, 1, true)};
  const std::vector<double> before(params[0].data().begin(), params[0].data().end());
  auto state = AdamState::for_parameters(params, {.lr = 0.0});
  for (int i = 0; i < 5; ++i) {
    std::vector<std::vector<double>> grads{random_weights(16, rng)};
    adam_step(params, grads, state);
  }
  EXPECT_EQ(std::vector<double>(params[0].data().begin(), params[0].data().end()), before);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<Tensor> params{Tensor::zeros({3}, true)};
  auto state = AdamState::for_parameters(params);
  std::vector<std::vector<double>> grads{{1.0, 2.0}};
  EXPECT_THROW(adam_step(params, grads, state), ShapeError);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  Tensor p = Tensor::zeros({2}, true);
  p.mutable_grad()[0] = 3.0;
  p.mutable_grad()[1] = 4.0;
  std::vector<Tensor> params{p};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(p.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(p.grad()[1], 0.8, 1e-12);
}

TEST(FiniteDifference, SumIsExact) {
  std::mt19937_64 rng(12);
  auto op = [](const Tensor& x) { return sum(x); };
  EXPECT_EQ(finite_difference_check(op, random_tensor({1}, rng)), 0.0);
  // Longer sums only pick up accumulation roundoff in the difference.
  EXPECT_LT(finite_difference_check(op, random_tensor({5}, rng)), 1e-10);
}

TEST(FiniteDifference, SoftmaxCrossEntropyPipeline) {
  std::mt19937_64 rng(13);
  std::vector<int> labels{1, 3, kIgnoreId, 0};
  auto op = [&](const Tensor& x) { return cross_entropy(log(softmax(x, -1)), labels); };
  EXPECT_LT(finite_difference_check(op, random_tensor({4, 5}, rng)), 1e-4);
}

// Every exported differentiable op, 20 seeds, inputs in [-1, 1].
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchCentralDifferences) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  const auto w12 = Tensor::from({3, 4}, random_weights(12, rng));
  const Tensor b = random_tensor({3, 4}, rng);
  const Tensor row = random_tensor({4}, rng);
  const Tensor rhs = random_tensor({4, 2}, rng);
  const Tensor gamma = random_tensor({4}, rng);
  const Tensor beta = random_tensor({4}, rng);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor mask = Tensor::from({1, 3}, {1, 0, 1});
  std::vector<int> labels{2, kIgnoreId, 0};
  std::vector<int> ids{3, 0, 1, 3};
  const Tensor table = random_tensor({4, 3}, rng);

  const std::vector<std::pair<const char*, std::function<Tensor(const Tensor&)>>> cases = {
      {"add", [&](const Tensor& t) { return mul(add(t, b), w12); }},
      {"add_broadcast", [&](const Tensor& t) { return mul(add(t, row), w12); }},
      {"sub", [&](const Tensor& t) { return mul(sub(b, t), w12); }},
      {"mul", [&](const Tensor& t) { return mul(mul(t, t), w12); }},
      {"scale", [&](const Tensor& t) { return mul(scale(t, -1.7), w12); }},
      {"tanh", [&](const Tensor& t) { return mul(tanh(t), w12); }},
      {"sigmoid", [&](const Tensor& t) { return mul(sigmoid(t), w12); }},
      {"gelu", [&](const Tensor& t) { return mul(gelu(t), w12); }},
      {"exp", [&](const Tensor& t) { return mul(exp(t), w12); }},
      {"log", [&](const Tensor& t) { return mul(log(add_scalar(t, 2.0)), w12); }},
      {"matmul_left", [&](const Tensor& t) { return matmul(t, rhs); }},
      {"matmul_right", [&](const Tensor& t) { return matmul(x, reshape(t, {4, 3})); }},
      {"matmul_batched", [&](const Tensor& t) { return matmul(reshape(t, {3, 2, 2}), reshape(t, {3, 2, 2})); }},
      {"permute", [&](const Tensor& t) { return mul(transpose_last(t), transpose_last(w12)); }},
      {"slice", [&](const Tensor& t) { return mul(slice(t, 1, 1, 2), slice(w12, 1, 0, 2)); }},
      {"select_concat", [&](const Tensor& t) { return mul(concat({select(t, 0, 2), select(t, 0, 0)}, 0), concat({row, row}, 0)); }},
      {"stack", [&](const Tensor& t) { return mul(stack({t, scale(t, 2.0)}, 0), stack({w12, b}, 0)); }},
      {"softmax", [&](const Tensor& t) { return mul(softmax(t, 0), w12); }},
      {"log_softmax", [&](const Tensor& t) { return mul(log_softmax(t, -1), w12); }},
      {"layer_norm", [&](const Tensor& t) { return mul(layer_norm(t, gamma, beta), w12); }},
      {"cross_entropy", [&](const Tensor& t) { return cross_entropy(t, labels); }},
      {"masked_mean", [&](const Tensor& t) { return mul(masked_mean(reshape(t, {1, 3, 4}), mask), row); }},
      {"masked_max", [&](const Tensor& t) { return mul(masked_max(reshape(t, {1, 3, 4}), mask), row); }},
      {"mean", [&](const Tensor& t) { return mean(mul(t, t)); }},
  };
  for (const auto& [name, op] : cases) {
    EXPECT_LT(finite_difference_check(op, x), 1e-4) << name;
  }
  // Gradient with respect to the looked-up table.
  const Tensor lookup_weights = random_tensor({4, 3}, rng);
  auto lookup = [&](const Tensor& t) { return mul(embedding(t, ids, {4}), lookup_weights); };
  EXPECT_LT(finite_difference_check(lookup, table), 1e-4) << "embedding";
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 20));

TEST(Embedding, PaddingRowsReceiveNoGradient) {
  Tensor table = Tensor::full({4, 2}, 0.5, true);
  std::vector<int> ids{0, 2, 0, 3};
  {
    Tape tape;
    tape.backward(sum(embedding(table, ids, {2, 2}, 0)));
  }
  const auto g = table.grad_or_zeros();
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[4], 1.0);
  EXPECT_EQ(g[6], 1.0);
}

TEST(Embedding, OutOfRangeIdThrows) {
  std::vector<int> ids{4};
  EXPECT_THROW(embedding(Tensor::zeros({4, 2}), ids, {1}), ContractError);
}

}  // namespace
}  // namespace uer
