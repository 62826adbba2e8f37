#include "archshape/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "archshape/error.hpp"
#include "archshape/random.hpp"

namespace archshape {

void validate(const TrainConfig& config) {
  require(config.learning_rate >= 0.0 && std::isfinite(config.learning_rate), ErrorKind::argument,
          "learning rate must be a finite non-negative number");
  require(config.momentum >= 0.0 && config.momentum < 1.0, ErrorKind::argument, "momentum must lie in [0, 1)");
  require(config.batch_size > 0, ErrorKind::argument, "batch size must be positive");
  require(config.epochs > 0, ErrorKind::argument, "epochs must be positive");
}

OptimizerState make_optimizer_state(std::span<const Tensor* const> params) {
  OptimizerState s;
  for (const Tensor* p : params) s.velocity.emplace_back(p->shape());
  return s;
}

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state,
                       const TrainConfig& config) {
  require(params.size() == grads.size() && params.size() == state.velocity.size(), ErrorKind::contract,
          "parameter, gradient and velocity counts differ");
  const double lr = config.learning_rate;
  const double mom = config.momentum;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    Tensor& v = state.velocity[t];
    const Tensor& g = grads[t];
    require(p.shape() == g.shape() && p.shape() == v.shape(), ErrorKind::contract,
            "shape mismatch at parameter " + std::to_string(t) + ": " + shape_string(p.shape()) + " vs grad " +
                shape_string(g.shape()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = -lr * g[i] + mom * v[i];
      p[i] += v[i];
    }
  }
}

LossResult cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  require(probs.rank() == 2 && probs.dim(0) == labels.size(), ErrorKind::argument,
          "need one label per probability row");
  const std::size_t N = probs.dim(0), C = probs.dim(1);
  LossResult r{0.0, Tensor(probs.shape())};
  for (std::size_t n = 0; n < N; ++n) {
    require(labels[n] < C, ErrorKind::argument,
            "label " + std::to_string(labels[n]) + " out of range for " + std::to_string(C) + " classes");
    r.loss += -std::log(probs[n * C + labels[n]]);
    for (std::size_t c = 0; c < C; ++c)
      r.grad_logits[n * C + c] = (probs[n * C + c] - (c == labels[n] ? 1.0 : 0.0)) / static_cast<double>(N);
  }
  r.loss /= static_cast<double>(N);
  return r;
}

Tensor stack_batch(const Dataset& data, std::span<const std::size_t> indices) {
  require(!indices.empty(), ErrorKind::argument, "empty batch");
  const GridDims dims = data[indices[0]].grid.dims();
  Tensor x({indices.size(), 1, dims.d, dims.h, dims.w});
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const VoxelGrid& g = data[indices[n]].grid;
    require(g.dims() == dims, ErrorKind::shape, "grids in one batch must share dims");
    std::copy(g.values().begin(), g.values().end(), x.data() + n * dims.count());
  }
  return x;
}

PassMetrics measure(const Model& model, const Dataset& data, std::size_t batch_size) {
  require(!data.empty(), ErrorKind::argument, "cannot measure an empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    auto fwd = forward(model, stack_batch(data, idx));
    std::vector<std::size_t> labels;
    for (auto i : idx) labels.push_back(data[i].label);
    loss_sum += cross_entropy(fwd.probs, labels).loss * static_cast<double>(idx.size());
    auto pred = argmax_rows(fwd.probs);
    for (std::size_t n = 0; n < idx.size(); ++n) correct += pred[n] == labels[n];
  }
  return {loss_sum / static_cast<double>(data.size()),
          static_cast<double>(correct) / static_cast<double>(data.size())};
}

TrainResult train(Model model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(config);
  require(!train_set.empty(), ErrorKind::argument, "training set is empty");
  require(!val_set.empty(), ErrorKind::argument, "validation set is empty");
  for (const auto* set : {&train_set, &val_set})
    for (const auto& ex : *set)
      require(ex.label < model.config.num_classes, ErrorKind::argument,
              "label " + std::to_string(ex.label) + " out of range");

  auto params = trainable_parameters(model);
  OptimizerState state = make_optimizer_state(std::vector<const Tensor*>(params.begin(), params.end()));
  Rng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle)
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, order.size() - start));
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(train_set[i].label);
      auto fwd = forward(model, stack_batch(train_set, idx), Mode::train);
      auto loss = cross_entropy(fwd.probs, labels);
      if (!std::isfinite(loss.loss))
        throw Error(ErrorKind::divergence,
                    "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no + 1));
      auto grads = backward(model, fwd, loss.grad_logits, false);
      sgd_momentum_step(params, grads.param_grads, state, config);
    }
    model.epochs_completed += 1;

    EpochRecord rec;
    rec.epoch = epoch;
    auto tr = measure(model, train_set, config.batch_size);
    auto va = measure(model, val_set, config.batch_size);
    rec.train_loss = tr.loss;
    rec.train_accuracy = tr.accuracy;
    rec.val_loss = va.loss;
    rec.val_accuracy = va.accuracy;
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
      throw Error(ErrorKind::divergence, "non-finite evaluation loss after epoch " + std::to_string(epoch));
    result.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.model = std::move(model);
  return result;
}

std::string training_log_csv(std::span<const EpochRecord> records) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_accuracy, r.val_loss,
                  r.val_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace archshape
