#include "archshape/model.hpp"

#include <cmath>

#include "archshape/error.hpp"
#include "archshape/random.hpp"

namespace archshape {
namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void glorot_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
}

ForwardResult run_forward(const Model& model, BatchNormParams* const* train_bn, const Tensor& x) {
  const ArchConfig& cfg = model.config;
  const std::size_t R = cfg.resolution;
  require(x.rank() == 5 && x.dim(1) == 1 && x.dim(2) == R && x.dim(3) == R && x.dim(4) == R, ErrorKind::shape,
          "model expects input (N, 1, " + std::to_string(R) + ", " + std::to_string(R) + ", " + std::to_string(R) +
              "), got " + shape_string(x.shape()));
  ForwardResult out;
  Tensor h = x;
  for (std::size_t b = 0; b < ArchConfig::kBlocks; ++b) {
    const ConvBlock& block = model.blocks[b];
    auto conv = conv3d_forward(h, block.conv);
    auto bn = train_bn ? batchnorm_forward(conv.y, *train_bn[b], Mode::train) : batchnorm_infer(conv.y, block.bn);
    auto relu = relu_forward(bn.y);
    auto pool = maxpool3d_forward(relu.y, {ArchConfig::kPool, ArchConfig::kPool, ArchConfig::kPool}, ArchConfig::kPool);
    out.trace[b] = BlockTrace{std::move(conv.ctx), std::move(bn.ctx), std::move(relu.ctx), std::move(pool.ctx)};
    out.activations[b] = pool.y;
    h = std::move(pool.y);
  }
  out.pooled_shape = h.shape();
  const std::size_t N = x.dim(0);
  auto dense = dense_forward(h.reshaped({N, h.size() / N}), model.dense);
  out.logits = std::move(dense.y);
  out.dense = std::move(dense.ctx);
  out.probs = softmax(out.logits);
  return out;
}

void put_tensor(ByteWriter& out, const Tensor& t) {
  out.put_u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) out.put_u32(static_cast<std::uint32_t>(d));
  for (double v : t.values()) out.put_f64(v);
}

void get_tensor(ByteReader& in, Tensor& expected_shape_holder, const char* name) {
  const std::size_t at = in.offset();
  const std::uint32_t rank = in.get_u32();
  Shape shape(rank);
  for (auto& d : shape) d = in.get_u32();
  if (shape != expected_shape_holder.shape())
    throw Error(ErrorKind::format, std::string(name) + " at byte " + std::to_string(at) + " has shape " +
                                       shape_string(shape) + ", config requires " +
                                       shape_string(expected_shape_holder.shape()));
  for (double& v : expected_shape_holder.values()) v = in.get_f64();
}

}  // namespace

void validate(const ArchConfig& config) {
  const std::size_t div = std::size_t{1} << ArchConfig::kBlocks;
  require(config.resolution >= div && config.resolution % div == 0, ErrorKind::config,
          "resolution " + std::to_string(config.resolution) + " is not a positive multiple of " + std::to_string(div));
  for (auto c : config.channels) require(c > 0, ErrorKind::config, "channel counts must be positive");
  require(config.num_classes >= 2, ErrorKind::config, "num_classes must be at least 2");
}

std::size_t flatten_width(const ArchConfig& config) {
  validate(config);
  const std::size_t side = config.resolution >> ArchConfig::kBlocks;
  return config.channels.back() * side * side * side;
}

Model build_model(const ArchConfig& config, std::uint64_t seed) {
  validate(config);
  Model m;
  m.config = config;
  m.seed = seed;
  Rng rng(seed);
  constexpr std::size_t k3 = ArchConfig::kKernel * ArchConfig::kKernel * ArchConfig::kKernel;
  std::size_t c_in = 1;
  for (std::size_t b = 0; b < ArchConfig::kBlocks; ++b) {
    const std::size_t c_out = config.channels[b];
    m.blocks[b].conv = make_conv3d(c_out, c_in, ArchConfig::kKernel, ArchConfig::kStride, ArchConfig::kPadding);
    glorot_fill(m.blocks[b].conv.weights, c_in * k3, c_out * k3, rng);
    m.blocks[b].bn = make_batchnorm(c_out);
    c_in = c_out;
  }
  const std::size_t width = flatten_width(config);
  m.dense = make_dense(config.num_classes, width);
  glorot_fill(m.dense.weights, width, config.num_classes, rng);
  return m;
}

std::vector<Tensor*> trainable_parameters(Model& model) {
  std::vector<Tensor*> out;
  for (auto& b : model.blocks) {
    out.push_back(&b.conv.weights);
    out.push_back(&b.conv.bias);
    out.push_back(&b.bn.gamma);
    out.push_back(&b.bn.beta);
  }
  out.push_back(&model.dense.weights);
  out.push_back(&model.dense.bias);
  return out;
}

std::vector<const Tensor*> trainable_parameters(const Model& model) {
  auto mut = trainable_parameters(const_cast<Model&>(model));
  return {mut.begin(), mut.end()};
}

ForwardResult forward(Model& model, const Tensor& x, Mode mode) {
  if (mode == Mode::infer) return forward(static_cast<const Model&>(model), x);
  std::array<BatchNormParams*, ArchConfig::kBlocks> bns{};
  for (std::size_t b = 0; b < ArchConfig::kBlocks; ++b) bns[b] = &model.blocks[b].bn;
  return run_forward(model, bns.data(), x);
}

ForwardResult forward(const Model& model, const Tensor& x) { return run_forward(model, nullptr, x); }

BackwardResult backward(const Model& model, ForwardResult& fwd, const Tensor& grad_logits, bool need_input_grad) {
  require(grad_logits.shape() == fwd.logits.shape(), ErrorKind::contract,
          "logit gradient " + shape_string(grad_logits.shape()) + " does not match logits " +
              shape_string(fwd.logits.shape()));
  BackwardResult out;
  out.param_grads.resize(4 * ArchConfig::kBlocks + 2);
  auto dense = dense_backward(grad_logits, fwd.dense, model.dense);
  out.param_grads[4 * ArchConfig::kBlocks] = std::move(dense.grad_w);
  out.param_grads[4 * ArchConfig::kBlocks + 1] = std::move(dense.grad_b);
  Tensor g = dense.grad_x.reshaped(fwd.pooled_shape);
  for (std::size_t b = ArchConfig::kBlocks; b-- > 0;) {
    const ConvBlock& block = model.blocks[b];
    BlockTrace& t = fwd.trace[b];
    g = maxpool3d_backward(g, t.pool);
    g = relu_backward(g, t.relu);
    auto bn = batchnorm_backward(g, t.bn, block.bn);
    const bool want_x = b > 0 || need_input_grad;
    auto conv = conv3d_backward(bn.grad_x, t.conv, block.conv, want_x);
    out.param_grads[4 * b] = std::move(conv.grad_w);
    out.param_grads[4 * b + 1] = std::move(conv.grad_b);
    out.param_grads[4 * b + 2] = std::move(bn.grad_gamma);
    out.param_grads[4 * b + 3] = std::move(bn.grad_beta);
    g = std::move(conv.grad_x);
  }
  if (need_input_grad) out.input_grad = std::move(g);
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  require(probs.rank() == 2, ErrorKind::shape, "argmax_rows expects (N, C)");
  const std::size_t N = probs.dim(0), C = probs.dim(1);
  std::vector<std::size_t> out(N, 0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 1; c < C; ++c)
      if (probs[n * C + c] > probs[n * C + out[n]]) out[n] = c;
  return out;
}

Bytes save_checkpoint(const Model& model) {
  validate(model.config);
  ByteWriter out;
  out.put_bytes("ASN1");
  out.put_u32(kCheckpointVersion);
  out.put_u32(static_cast<std::uint32_t>(model.config.resolution));
  for (auto c : model.config.channels) out.put_u32(static_cast<std::uint32_t>(c));
  out.put_u32(static_cast<std::uint32_t>(model.config.num_classes));
  for (const auto& b : model.blocks) {
    put_tensor(out, b.conv.weights);
    put_tensor(out, b.conv.bias);
    put_tensor(out, b.bn.gamma);
    put_tensor(out, b.bn.beta);
    put_tensor(out, b.bn.running_mean);
    put_tensor(out, b.bn.running_var);
  }
  put_tensor(out, model.dense.weights);
  put_tensor(out, model.dense.bias);
  out.put_u64(model.epochs_completed);
  out.put_u64(model.seed);
  return out.take();
}

Model load_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 8 || in.get_bytes(4) != "ASN1") throw Error(ErrorKind::format, "bad ASN1 magic");
  const std::uint32_t version = in.get_u32();
  require(version == kCheckpointVersion, ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));
  ArchConfig cfg;
  cfg.resolution = in.get_u32();
  for (auto& c : cfg.channels) c = in.get_u32();
  cfg.num_classes = in.get_u32();
  try {
    validate(cfg);
  } catch (const Error& e) {
    throw Error(ErrorKind::format, std::string("checkpoint config invalid: ") + e.what());
  }
  // Shapes come from a fresh build; the payload then overwrites every value.
  Model m = build_model(cfg, 0);
  for (auto& b : m.blocks) {
    get_tensor(in, b.conv.weights, "conv weights");
    get_tensor(in, b.conv.bias, "conv bias");
    get_tensor(in, b.bn.gamma, "bn gamma");
    get_tensor(in, b.bn.beta, "bn beta");
    get_tensor(in, b.bn.running_mean, "bn running mean");
    get_tensor(in, b.bn.running_var, "bn running var");
  }
  get_tensor(in, m.dense.weights, "dense weights");
  get_tensor(in, m.dense.bias, "dense bias");
  m.epochs_completed = in.get_u64();
  m.seed = in.get_u64();
  require(in.remaining() == 0, ErrorKind::format, std::to_string(in.remaining()) + " trailing bytes after checkpoint");
  // The layout has no flag for running statistics; any completed epoch implies them.
  for (auto& b : m.blocks) b.bn.has_running_stats = m.epochs_completed > 0;
  return m;
}

}  // namespace archshape
