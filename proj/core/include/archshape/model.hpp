#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "archshape/binary_io.hpp"
#include "archshape/layers.hpp"

namespace archshape {

/// Four conv(3^3, pad 1) -> batchnorm -> relu -> maxpool(2) blocks, then one
/// dense layer to `num_classes` logits and a softmax.
struct ArchConfig {
  static constexpr std::size_t kBlocks = 4;
  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 1;
  static constexpr std::size_t kPadding = 1;
  static constexpr std::size_t kPool = 2;

  std::size_t resolution = 32;
  std::array<std::size_t, kBlocks> channels{8, 16, 32, 64};
  std::size_t num_classes = 2;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Throws a config error when the resolution does not survive four halvings.
void validate(const ArchConfig& config);

/// Width of the flattened feature vector feeding the dense layer.
std::size_t flatten_width(const ArchConfig& config);

struct ConvBlock {
  Conv3dParams conv;
  BatchNormParams bn;
};

struct Model {
  ArchConfig config;
  std::array<ConvBlock, ArchConfig::kBlocks> blocks;
  DenseParams dense;
  std::uint64_t epochs_completed = 0;
  std::uint64_t seed = 0;
};

/// Glorot-uniform weights, zero biases, gamma = 1, beta = 0, no running stats.
Model build_model(const ArchConfig& config, std::uint64_t seed);

/// Learnable tensors in a fixed order: per block conv W, conv b, gamma, beta;
/// then dense W, dense b.
std::vector<Tensor*> trainable_parameters(Model& model);
std::vector<const Tensor*> trainable_parameters(const Model& model);

struct BlockTrace {
  ConvContext conv;
  BatchNormContext bn;
  ReluContext relu;
  PoolContext pool;
};

struct ForwardResult {
  Tensor logits;  // (N, num_classes)
  Tensor probs;   // (N, num_classes)
  /// Output of each block after pooling.
  std::array<Tensor, ArchConfig::kBlocks> activations;
  std::array<BlockTrace, ArchConfig::kBlocks> trace;
  DenseContext dense;
  Shape pooled_shape;
};

/// `x` is (N, 1, R, R, R). Train mode updates batchnorm running statistics.
ForwardResult forward(Model& model, const Tensor& x, Mode mode);
/// Infer-mode forward; never mutates the model.
ForwardResult forward(const Model& model, const Tensor& x);

struct BackwardResult {
  std::vector<Tensor> param_grads;  // same order as trainable_parameters()
  Tensor input_grad;                // empty unless requested
};

/// Backpropagates `grad_logits` through the recorded forward pass.
BackwardResult backward(const Model& model, ForwardResult& fwd, const Tensor& grad_logits, bool need_input_grad);

/// Index of the largest probability per row; ties go to the lower class id.
std::vector<std::size_t> argmax_rows(const Tensor& probs);

/// ASN1 checkpoint: "ASN1", u32 version 1, u32 resolution, 4 x u32 channels,
/// u32 num_classes; per tensor u32 rank, u32 dims, f64 payload (per block conv
/// W, conv b, gamma, beta, running mean, running var; then dense W, dense b);
/// u64 epochs, u64 seed. All little-endian.
Bytes save_checkpoint(const Model& model);
Model load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace archshape
