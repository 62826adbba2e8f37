#pragma once

#include <cstddef>
#include <vector>

#include "archshape/tensor.hpp"

namespace archshape {

enum class Mode { train, infer };

// Every forward call returns the output together with the context its
// backward needs. A context is single-use: a second backward on the same
// context is a contract error.

// ---------------------------------------------------------------- conv3d

/// Cross-correlation (no kernel flip) with symmetric zero padding.
struct Conv3dParams {
  Tensor weights;  // (C_out, C_in, kd, kh, kw)
  Tensor bias;     // (C_out)
  std::size_t stride = 1;
  std::size_t padding = 1;
};

Conv3dParams make_conv3d(std::size_t c_out, std::size_t c_in, std::size_t kernel, std::size_t stride = 1,
                         std::size_t padding = 1);

struct ConvContext {
  Tensor input;
  Shape output_shape;
  bool consumed = false;
};

struct ConvForward {
  Tensor y;
  ConvContext ctx;
};

struct ConvGradients {
  Tensor grad_x;  // empty when the input gradient was not requested
  Tensor grad_w;
  Tensor grad_b;
};

Shape conv3d_output_shape(const Shape& input, const Conv3dParams& p);
ConvForward conv3d_forward(const Tensor& x, const Conv3dParams& p);
ConvGradients conv3d_backward(const Tensor& grad_y, ConvContext& ctx, const Conv3dParams& p,
                              bool need_input_grad = true);

// ------------------------------------------------------------ batch norm

/// Per-channel normalization over (N, D, H, W) followed by gamma * x_hat + beta.
/// Batch variance divides by the element count; running statistics follow
/// running = (1 - momentum_stat) * running + momentum_stat * batch.
struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double epsilon = 1e-5;
  double momentum_stat = 0.1;
  bool has_running_stats = false;
};

BatchNormParams make_batchnorm(std::size_t channels);

struct BatchNormContext {
  Tensor x_hat;
  std::vector<double> inv_std;
  Mode mode = Mode::train;
  bool consumed = false;
};

struct BatchNormForward {
  Tensor y;
  BatchNormContext ctx;
};

struct BatchNormGradients {
  Tensor grad_x;
  Tensor grad_gamma;
  Tensor grad_beta;
};

/// Train mode uses batch statistics and updates the running statistics in `p`.
BatchNormForward batchnorm_forward(const Tensor& x, BatchNormParams& p, Mode mode);
/// Infer mode only; throws a state error when no running statistics exist.
BatchNormForward batchnorm_infer(const Tensor& x, const BatchNormParams& p);
BatchNormGradients batchnorm_backward(const Tensor& grad_y, BatchNormContext& ctx, const BatchNormParams& p);

// --------------------------------------------------------------- maxpool

struct PoolWindow {
  std::size_t d = 2;
  std::size_t h = 2;
  std::size_t w = 2;
};

struct PoolContext {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
  bool consumed = false;
};

struct PoolForward {
  Tensor y;
  PoolContext ctx;
};

/// Ties go to the lowest linear index in the window.
PoolForward maxpool3d_forward(const Tensor& x, PoolWindow window = {}, std::size_t stride = 2);
Tensor maxpool3d_backward(const Tensor& grad_y, PoolContext& ctx);

// ------------------------------------------------------------------ relu

struct ReluContext {
  Tensor input;
  bool consumed = false;
};

struct ReluForward {
  Tensor y;
  ReluContext ctx;
};

ReluForward relu_forward(const Tensor& x);
/// Passes gradient where the forward input was strictly positive.
Tensor relu_backward(const Tensor& grad_y, ReluContext& ctx);

// ----------------------------------------------------------------- dense

struct DenseParams {
  Tensor weights;  // (C_out, C_in)
  Tensor bias;     // (C_out)
};

DenseParams make_dense(std::size_t c_out, std::size_t c_in);

struct DenseContext {
  Tensor input;
  bool consumed = false;
};

struct DenseForward {
  Tensor y;
  DenseContext ctx;
};

struct DenseGradients {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_b;
};

DenseForward dense_forward(const Tensor& x, const DenseParams& p);
DenseGradients dense_backward(const Tensor& grad_y, DenseContext& ctx, const DenseParams& p);

// --------------------------------------------------------------- softmax

/// Row-wise softmax of (N, C) logits, computed after subtracting the row max.
Tensor softmax(const Tensor& logits);

}  // namespace archshape
