#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "archshape/model.hpp"
#include "archshape/voxel_grid.hpp"

namespace archshape {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::size_t epochs = 60;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

void validate(const TrainConfig& config);

/// One velocity tensor per trainable parameter, zero-initialized.
struct OptimizerState {
  std::vector<Tensor> velocity;
};

OptimizerState make_optimizer_state(std::span<const Tensor* const> params);

/// Heavy-ball momentum: v <- -lr * g + momentum * v, then theta <- theta + v.
void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state,
                       const TrainConfig& config);

struct LossResult {
  double loss = 0.0;   // batch mean of -log p[label]
  Tensor grad_logits;  // (p - onehot) / N
};

LossResult cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);

struct Example {
  VoxelGrid grid;
  std::size_t label = 0;
};

using Dataset = std::vector<Example>;

/// Stacks grids into an (N, 1, D, H, W) tensor.
Tensor stack_batch(const Dataset& data, std::span<const std::size_t> indices);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct PassMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Infer-mode loss and accuracy over a whole dataset.
PassMetrics measure(const Model& model, const Dataset& data, std::size_t batch_size);

struct TrainResult {
  Model model;
  std::vector<EpochRecord> records;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Each epoch: seeded shuffle, mini-batch forward/backward/step in train
/// mode, then infer-mode metrics over the train and validation sets.
TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// "epoch,train_loss,train_acc,val_loss,val_acc" plus one row per epoch,
/// reals printed with 9 significant digits.
std::string training_log_csv(std::span<const EpochRecord> records);

}  // namespace archshape
