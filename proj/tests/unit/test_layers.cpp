#include <gtest/gtest.h>

#include <cmath>

#include "archshape/layers.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace archshape {
namespace {

using test::throws_kind;

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t n = 0; n < std::min(a.size(), b.size()); ++n) m = std::max(m, std::abs(a[n] - b[n]));
  return m;
}

bool all_equal(const Tensor& t, double v) {
  for (double x : t.values())
    if (x != v) return false;
  return true;
}

// ------------------------------------------------------------------ conv3d

TEST(Conv3d, ZeroKernelGivesBias) {
  Rng rng(1);
  auto p = make_conv3d(3, 2, 3);
  p.weights.fill(0.0);
  p.bias.fill(0.7);
  const auto f = conv3d_forward(oracle::random_tensor({2, 2, 4, 5, 3}, rng), p);
  EXPECT_EQ(f.y.shape(), (Shape{2, 3, 4, 5, 3}));
  EXPECT_TRUE(all_equal(f.y, 0.7));
}

TEST(Conv3d, IdentityKernel) {
  Rng rng(2);
  auto p = make_conv3d(1, 1, 1, 1, 0);
  p.weights.fill(1.0);
  p.bias.fill(0.0);
  const Tensor x = oracle::random_tensor({2, 1, 3, 4, 5}, rng);
  auto f = conv3d_forward(x, p);
  EXPECT_EQ(f.y, x);
  const Tensor gy = oracle::random_tensor(f.y.shape(), rng);
  const auto g = conv3d_backward(gy, f.ctx, p);
  EXPECT_EQ(g.grad_x, gy);
}

TEST(Conv3d, SmallCaseMatchesOracle) {
  Rng rng(3);
  auto p = make_conv3d(1, 1, 2, 1, 0);
  p.weights = oracle::random_tensor({1, 1, 2, 2, 2}, rng);
  const Tensor x = oracle::random_tensor({1, 1, 3, 3, 3}, rng);
  const auto f = conv3d_forward(x, p);
  EXPECT_EQ(f.y.shape(), (Shape{1, 1, 2, 2, 2}));
  EXPECT_LE(max_abs_diff(f.y, oracle::conv3d_direct(x, p.weights, p.bias, 1, 0)), 1e-12);
}

TEST(Conv3d, RandomGridsMatchOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t kernel = static_cast<std::size_t>(rng.uniform_int(1, 3));
    const std::size_t stride = static_cast<std::size_t>(rng.uniform_int(1, 2));
    const std::size_t pad = static_cast<std::size_t>(rng.uniform_int(0, 2));
    const std::size_t ci = static_cast<std::size_t>(rng.uniform_int(1, 4));
    const std::size_t co = static_cast<std::size_t>(rng.uniform_int(1, 9));
    Shape xs{static_cast<std::size_t>(rng.uniform_int(1, 3)), ci};
    for (int a = 0; a < 3; ++a) xs.push_back(static_cast<std::size_t>(rng.uniform_int(static_cast<long>(kernel), 9)));
    auto p = make_conv3d(co, ci, kernel, stride, pad);
    p.weights = oracle::random_tensor(p.weights.shape(), rng);
    p.bias = oracle::random_tensor(p.bias.shape(), rng);
    const Tensor x = oracle::random_tensor(xs, rng);
    const auto f = conv3d_forward(x, p);
    EXPECT_LE(max_abs_diff(f.y, oracle::conv3d_direct(x, p.weights, p.bias, stride, pad)), 1e-12)
        << "trial " << trial;
  }
}

TEST(Conv3d, BackwardIsAdjoint) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t stride = trial % 2 ? 2 : 1;
    auto p = make_conv3d(5, 3, 3, stride, 1);
    p.weights = oracle::random_tensor(p.weights.shape(), rng);
    p.bias = oracle::random_tensor(p.bias.shape(), rng);
    const Tensor x = oracle::random_tensor({2, 3, 6, 5, 7}, rng);
    auto f = conv3d_forward(x, p);
    const Tensor r = oracle::random_tensor(f.y.shape(), rng);
    const auto g = conv3d_backward(r, f.ctx, p);

    // y - b is bilinear in (x, w): <y - b, r> = <x, dx> = <w, dw>.
    double linear = 0.0, bias_part = 0.0;
    const std::size_t spatial = f.y.size() / (f.y.dim(0) * f.y.dim(1));
    for (std::size_t n = 0; n < f.y.size(); ++n) {
      const std::size_t c = (n / spatial) % f.y.dim(1);
      linear += (f.y[n] - p.bias[c]) * r[n];
      bias_part += r[n] * (c == 0);
    }
    EXPECT_NEAR(dot(x, g.grad_x), linear, 1e-10 * (1 + std::abs(linear)));
    EXPECT_NEAR(dot(p.weights, g.grad_w), linear, 1e-10 * (1 + std::abs(linear)));
    EXPECT_NEAR(g.grad_b[0], bias_part, 1e-12);
  }
}

TEST(Conv3d, ZeroGradGivesZeroGrads) {
  Rng rng(6);
  auto p = make_conv3d(4, 2, 3);
  auto f = conv3d_forward(oracle::random_tensor({1, 2, 4, 4, 4}, rng), p);
  const auto g = conv3d_backward(Tensor(f.y.shape()), f.ctx, p);
  EXPECT_TRUE(all_equal(g.grad_x, 0.0));
  EXPECT_TRUE(all_equal(g.grad_w, 0.0));
  EXPECT_TRUE(all_equal(g.grad_b, 0.0));
}

TEST(Conv3d, SkipsInputGradWhenNotRequested) {
  Rng rng(7);
  auto p = make_conv3d(2, 1, 3);
  auto f = conv3d_forward(oracle::random_tensor({1, 1, 4, 4, 4}, rng), p);
  const auto g = conv3d_backward(oracle::random_tensor(f.y.shape(), rng), f.ctx, p, false);
  EXPECT_TRUE(g.grad_x.empty());
  EXPECT_FALSE(g.grad_w.empty());
}

TEST(Conv3d, Errors) {
  Rng rng(8);
  auto p = make_conv3d(2, 3, 3);
  EXPECT_TRUE(throws_kind(ErrorKind::shape, [&] { conv3d_forward(Tensor({1, 2, 4, 4, 4}), p); }));
  EXPECT_TRUE(throws_kind(ErrorKind::shape, [&] { conv3d_forward(Tensor({3, 4, 4, 4}), p); }));
  auto f = conv3d_forward(oracle::random_tensor({1, 3, 4, 4, 4}, rng), p);
  const Tensor gy(f.y.shape());
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { conv3d_backward(Tensor({1, 2, 3, 4, 4}), f.ctx, p); }));
  conv3d_backward(gy, f.ctx, p);
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { conv3d_backward(gy, f.ctx, p); }));
}

TEST(Conv3d, MakeGivesZeroParams) {
  const auto p = make_conv3d(8, 4, 3);
  EXPECT_EQ(p.weights.shape(), (Shape{8, 4, 3, 3, 3}));
  EXPECT_TRUE(all_equal(p.weights, 0.0));
  EXPECT_TRUE(all_equal(p.bias, 0.0));
}

// ------------------------------------------------------------- batchnorm

TEST(BatchNorm, ConstantChannelGivesBeta) {
  auto p = make_batchnorm(2);
  p.beta.fill(0.3);
  Tensor x({2, 2, 2, 2, 2});
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = (n / 8) % 2 ? -4.0 : 9.0;
  const auto f = batchnorm_forward(x, p, Mode::train);
  for (double v : f.y.values()) EXPECT_NEAR(v, 0.3, 1e-12);
  EXPECT_TRUE(p.has_running_stats);
}

TEST(BatchNorm, HandValues) {
  auto p = make_batchnorm(1);
  const Tensor x({1, 1, 1, 2, 2}, {1, 2, 3, 4});
  const auto f = batchnorm_forward(x, p, Mode::train);
  const double expect[] = {-1.3416, -0.4472, 0.4472, 1.3416};
  for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(f.y[n], expect[n], 1e-3);
  EXPECT_NEAR(f.y[0], -1.5 / std::sqrt(1.25 + 1e-5), 1e-15);
  // running = 0.9 * (0, 1) + 0.1 * (2.5, 1.25)
  EXPECT_NEAR(p.running_mean[0], 0.25, 1e-15);
  EXPECT_NEAR(p.running_var[0], 1.025, 1e-15);
}

TEST(BatchNorm, UnitVarianceInput) {
  auto p = make_batchnorm(1);
  const Tensor x({1, 1, 1, 1, 4}, {-1, 1, -1, 1});
  const auto f = batchnorm_forward(x, p, Mode::train);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_NEAR(f.y[n], x[n] / std::sqrt(1 + 1e-5), 1e-15);
}

TEST(BatchNorm, InferUsesRunningStats) {
  auto p = make_batchnorm(1);
  const Tensor x({1, 1, 1, 1, 2}, {1, 3});
  EXPECT_TRUE(throws_kind(ErrorKind::state, [&] { batchnorm_infer(x, p); }));
  EXPECT_TRUE(throws_kind(ErrorKind::state, [&] { batchnorm_forward(x, p, Mode::infer); }));
  p.running_mean[0] = 1.0;
  p.running_var[0] = 4.0;
  p.gamma[0] = 2.0;
  p.beta[0] = 0.5;
  p.has_running_stats = true;
  const auto f = batchnorm_infer(x, p);
  EXPECT_NEAR(f.y[0], 0.5, 1e-15);
  EXPECT_NEAR(f.y[1], 2.0 * 2.0 / std::sqrt(4 + 1e-5) + 0.5, 1e-15);
  EXPECT_EQ(p.running_mean[0], 1.0);
}

TEST(BatchNorm, ZeroGradAndConsumedContext) {
  Rng rng(9);
  auto p = make_batchnorm(3);
  auto f = batchnorm_forward(oracle::random_tensor({2, 3, 2, 2, 2}, rng), p, Mode::train);
  const auto g = batchnorm_backward(Tensor(f.y.shape()), f.ctx, p);
  for (const Tensor* t : {&g.grad_x, &g.grad_gamma, &g.grad_beta})
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { batchnorm_backward(Tensor(f.y.shape()), f.ctx, p); }));
}

// --------------------------------------------------------------- maxpool

TEST(MaxPool, ConstantGrid) {
  const auto f = maxpool3d_forward(Tensor({1, 2, 4, 4, 4}, 3.25));
  EXPECT_EQ(f.y.shape(), (Shape{1, 2, 2, 2, 2}));
  EXPECT_TRUE(all_equal(f.y, 3.25));
}

TEST(MaxPool, LinearIndexGrid) {
  Tensor x({1, 1, 4, 4, 4});
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = static_cast<double>(n);
  auto f = maxpool3d_forward(x);
  const auto ref = oracle::maxpool_exhaustive(x, {}, 2);
  EXPECT_EQ(f.y, ref.y);
  EXPECT_EQ(f.ctx.argmax, ref.argmax);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        EXPECT_EQ(f.y.at({0, 0, a, b, c}), static_cast<double>(((2 * a + 1) * 4 + 2 * b + 1) * 4 + 2 * c + 1));

  const Tensor gx = maxpool3d_backward(Tensor(f.y.shape(), 1.0), f.ctx);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        EXPECT_EQ(gx.at({0, 0, i, j, k}), (i % 2 && j % 2 && k % 2) ? 1.0 : 0.0);
}

TEST(MaxPool, SinglePositiveValue) {
  Tensor x({1, 1, 2, 2, 2});
  x[5] = 0.8;
  auto f = maxpool3d_forward(x);
  EXPECT_EQ(f.y[0], 0.8);
  const Tensor gx = maxpool3d_backward(Tensor(f.y.shape()), f.ctx);
  EXPECT_TRUE(all_equal(gx, 0.0));
}

TEST(MaxPool, TiesGoToLowestIndex) {
  auto f = maxpool3d_forward(Tensor({1, 1, 2, 2, 2}, 1.0));
  EXPECT_EQ(f.ctx.argmax[0], 0u);
}

TEST(MaxPool, RandomGridsMatchOracle) {
  Rng rng(10);
  for (int trial = 0; trial < 120; ++trial) {
    const PoolWindow window{static_cast<std::size_t>(rng.uniform_int(1, 3)),
                            static_cast<std::size_t>(rng.uniform_int(1, 3)),
                            static_cast<std::size_t>(rng.uniform_int(1, 3))};
    const std::size_t stride = static_cast<std::size_t>(rng.uniform_int(1, 3));
    Shape xs{static_cast<std::size_t>(rng.uniform_int(1, 2)), static_cast<std::size_t>(rng.uniform_int(1, 3)),
             static_cast<std::size_t>(rng.uniform_int(3, 8)), static_cast<std::size_t>(rng.uniform_int(3, 8)),
             static_cast<std::size_t>(rng.uniform_int(3, 8))};
    Tensor x = oracle::random_tensor(xs, rng);
    if (trial % 2)  // coarse values force ties
      for (auto& v : x.values()) v = std::floor(v * 2.0);
    const auto f = maxpool3d_forward(x, window, stride);
    const auto ref = oracle::maxpool_exhaustive(x, window, stride);
    EXPECT_EQ(f.y, ref.y) << "trial " << trial;
    EXPECT_EQ(f.ctx.argmax, ref.argmax) << "trial " << trial;
  }
}

TEST(MaxPool, Errors) {
  EXPECT_TRUE(throws_kind(ErrorKind::shape, [] { maxpool3d_forward(Tensor({1, 1, 1, 4, 4})); }));
  auto f = maxpool3d_forward(Tensor({1, 1, 2, 2, 2}));
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { maxpool3d_backward(Tensor({1, 1, 2, 1, 1}), f.ctx); }));
  maxpool3d_backward(Tensor(f.y.shape()), f.ctx);
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { maxpool3d_backward(Tensor(f.y.shape()), f.ctx); }));
}

// ------------------------------------------------------------------ relu

TEST(Relu, ClampsNegatives) {
  auto f = relu_forward(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(f.y, Tensor({3}, {0, 0, 2}));
  const Tensor gx = relu_backward(Tensor({3}, {5, 6, 7}), f.ctx);
  EXPECT_EQ(gx, Tensor({3}, {0, 0, 7}));
}

TEST(Relu, PositiveIsIdentity) {
  Rng rng(12);
  const Tensor x = oracle::random_tensor({2, 3, 4}, rng, 0.1, 2.0);
  auto f = relu_forward(x);
  EXPECT_EQ(f.y, x);
  const Tensor g = oracle::random_tensor(x.shape(), rng);
  EXPECT_EQ(relu_backward(g, f.ctx), g);
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { relu_backward(g, f.ctx); }));
}

// ----------------------------------------------------------------- dense

TEST(Dense, IdentityWeights) {
  DenseParams p{Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3})};
  const Tensor x({2, 3}, {1, 2, 3, -4, 5, -6});
  EXPECT_EQ(dense_forward(x, p).y, x);
}

TEST(Dense, HandMultiply) {
  DenseParams p{Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, {0.5, -0.5})};
  auto f = dense_forward(Tensor({1, 2}, {1, 1}), p);
  EXPECT_EQ(f.y, Tensor({1, 2}, {3.5, 6.5}));
  const auto g = dense_backward(Tensor({1, 2}, {1, -1}), f.ctx, p);
  EXPECT_EQ(g.grad_x, Tensor({1, 2}, {-2, -2}));
  EXPECT_EQ(g.grad_w, Tensor({2, 2}, {1, 1, -1, -1}));
  EXPECT_EQ(g.grad_b, Tensor({2}, {1, -1}));
}

TEST(Dense, Errors) {
  const auto p = make_dense(2, 3);
  EXPECT_TRUE(throws_kind(ErrorKind::shape, [&] { dense_forward(Tensor({1, 4}), p); }));
  auto f = dense_forward(Tensor({1, 3}), p);
  dense_backward(Tensor({1, 2}), f.ctx, p);
  EXPECT_TRUE(throws_kind(ErrorKind::contract, [&] { dense_backward(Tensor({1, 2}), f.ctx, p); }));
}

// --------------------------------------------------------------- softmax

TEST(Softmax, KnownValues) {
  const Tensor s = softmax(Tensor({3, 2}, {0, 0, 1000, 0, 1, 2}));
  EXPECT_EQ(s.at({0, 0}), 0.5);
  EXPECT_EQ(s.at({0, 1}), 0.5);
  EXPECT_NEAR(s.at({1, 0}), 1.0, 1e-12);
  EXPECT_NEAR(s.at({1, 1}), 0.0, 1e-12);
  EXPECT_NEAR(s.at({2, 0}), 0.26894, 1e-5);
  EXPECT_NEAR(s.at({2, 1}), 0.73106, 1e-5);
  EXPECT_TRUE(all_finite(s));
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(13);
  const Tensor s = softmax(oracle::random_tensor({10, 5}, rng, -50, 50));
  for (std::size_t r = 0; r < 10; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) sum += s.at({r, c});
    EXPECT_NEAR(sum, 1.0, 1e-14);
  }
}

}  // namespace
}  // namespace archshape
