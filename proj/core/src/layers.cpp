#include "archshape/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "archshape/error.hpp"

namespace archshape {
namespace {

void mark_consumed(bool& consumed, const char* layer) {
  require(!consumed, ErrorKind::contract, std::string(layer) + " context already consumed by a backward pass");
  consumed = true;
}

void require_rank5(const Tensor& x, const char* what) {
  require(x.rank() == 5, ErrorKind::shape,
          std::string(what) + " expects (N, C, D, H, W), got " + shape_string(x.shape()));
}

struct Range {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

/// Output positions o in [0, out) whose input position o*stride + k - pad lies in [0, in).
Range valid_outputs(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
  long lo = 0;
  if (k < pad) lo = static_cast<long>((pad - k + stride - 1) / stride);
  long last = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  if (last < 0) return {0, 0};
  long hi = std::min(static_cast<long>(out), last / static_cast<long>(stride) + 1);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

/// Four fixed partial sums; deterministic and friendly to vectorization.
double dot_contiguous(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double dot_strided(const double* a, const double* b, std::size_t n, std::size_t stride_b) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i * stride_b];
  return s;
}

std::size_t fan_positions(const Shape& s) { return s[2] * s[3] * s[4]; }

/// Stride-1 convolution on zero-padded volumes. Output is computed in the
/// padded row pitch, so each kernel tap is a fixed offset into the input:
///   out_padded[o] = bias + sum_ci sum_tap w * in_padded[o + tap_offset].
/// Positions past the true output width/height are scratch and discarded.
struct PaddedGeometry {
  static constexpr std::size_t kSlack = 16;

  std::size_t D, H, W, pad;
  std::size_t Dp, Hp, Wp, plane, volume;
  std::size_t Do, Ho, Wo;
  std::size_t span;    // length of the contiguous output run
  std::size_t stride;  // per-channel buffer pitch, with read slack
  std::vector<std::size_t> taps;

  PaddedGeometry(std::size_t d, std::size_t h, std::size_t w, std::size_t p, const Shape& k)
      : D(d), H(h), W(w), pad(p), Dp(d + 2 * p), Hp(h + 2 * p), Wp(w + 2 * p) {
    plane = Hp * Wp;
    volume = Dp * plane;
    Do = Dp - k[2] + 1;
    Ho = Hp - k[3] + 1;
    Wo = Wp - k[4] + 1;
    span = (Do - 1) * plane + (Ho - 1) * Wp + Wo;
    stride = volume + kSlack;
    for (std::size_t kd = 0; kd < k[2]; ++kd)
      for (std::size_t kh = 0; kh < k[3]; ++kh)
        for (std::size_t kw = 0; kw < k[4]; ++kw) taps.push_back(kd * plane + kh * Wp + kw);
  }

  void pad_into(const double* src, double* dst) const {
    std::fill(dst, dst + stride, 0.0);
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t h = 0; h < H; ++h)
        std::copy(src + (d * H + h) * W, src + (d * H + h + 1) * W, dst + (d + pad) * plane + (h + pad) * Wp + pad);
  }
};

using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

inline v4d splat4(double x) { return v4d{x, x, x, x}; }

constexpr std::size_t kLanes = 8;
constexpr std::size_t kGroup = 4;

/// out[c][o] = init[c] + sum_ci sum_t w[c][ci][t] * in[ci][o + off[t]] for o in [0, len).
/// Accumulation order per output is fixed: ci ascending, then t ascending.
/// `in` channels must be readable kLanes past max(off) + len.
void correlate_taps(const double* in, std::size_t in_stride, std::size_t c_in, std::span<const std::size_t> off,
                    const double* w, std::size_t c_out, const double* init, double* out, std::size_t out_stride,
                    std::size_t len) {
  const std::size_t T = off.size();
  // Weights regrouped as [group][ci][t][lane-in-group], zero for missing channels.
  const std::size_t groups = (c_out + kGroup - 1) / kGroup;
  std::vector<double> wg(groups * c_in * T * kGroup, 0.0);
  for (std::size_t c = 0; c < c_out; ++c)
    for (std::size_t ci = 0; ci < c_in; ++ci)
      for (std::size_t t = 0; t < T; ++t)
        wg[(((c / kGroup) * c_in + ci) * T + t) * kGroup + c % kGroup] = w[(c * c_in + ci) * T + t];

  double tmp[kLanes];
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const std::size_t c0 = grp * kGroup;
    const std::size_t live = std::min(kGroup, c_out - c0);
    double start[kGroup] = {};
    for (std::size_t g = 0; g < live; ++g) start[g] = init ? init[c0 + g] : 0.0;
    const double* wgrp = wg.data() + grp * c_in * T * kGroup;
    for (std::size_t o = 0; o < len; o += kLanes) {
      v4d a0 = splat4(start[0]), b0 = a0;
      v4d a1 = splat4(start[1]), b1 = a1;
      v4d a2 = splat4(start[2]), b2 = a2;
      v4d a3 = splat4(start[3]), b3 = a3;
      const double* wp = wgrp;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* base = in + ci * in_stride + o;
        for (std::size_t t = 0; t < T; ++t, wp += kGroup) {
          const v4d xl = load4(base + off[t]);
          const v4d xh = load4(base + off[t] + 4);
          const v4d w0 = splat4(wp[0]), w1 = splat4(wp[1]), w2 = splat4(wp[2]), w3 = splat4(wp[3]);
          a0 += w0 * xl;
          b0 += w0 * xh;
          a1 += w1 * xl;
          b1 += w1 * xh;
          a2 += w2 * xl;
          b2 += w2 * xh;
          a3 += w3 * xl;
          b3 += w3 * xh;
        }
      }
      const std::size_t n = std::min(kLanes, len - o);
      const v4d lo[kGroup] = {a0, a1, a2, a3};
      const v4d hi[kGroup] = {b0, b1, b2, b3};
      for (std::size_t g = 0; g < live; ++g) {
        store4(tmp, lo[g]);
        store4(tmp + 4, hi[g]);
        std::copy(tmp, tmp + n, out + (c0 + g) * out_stride + o);
      }
    }
  }
}

/// gw[co][ci][t] += sum_o gy[co][o] * x[ci][o + off[t]] over o in [0, len),
/// for CG consecutive output channels starting at co.
template <std::size_t CG>
void weight_grad_block(const double* gy, std::size_t gy_stride, std::size_t co, const double* x,
                       std::size_t x_stride, std::size_t c_in, std::span<const std::size_t> off, double* gw,
                       std::size_t len) {
  constexpr std::size_t kTapBlock = 3;
  const std::size_t T = off.size();
  const std::size_t full = len - len % 4;
  double lanes[4];
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    const double* xc = x + ci * x_stride;
    for (std::size_t t0 = 0; t0 < T; t0 += kTapBlock) {
      const std::size_t nt = std::min(kTapBlock, T - t0);
      const double* s[kTapBlock];
      for (std::size_t b = 0; b < kTapBlock; ++b) s[b] = xc + off[t0 + (b < nt ? b : 0)];
      v4d acc[CG][kTapBlock] = {};
      for (std::size_t o = 0; o < full; o += 4) {
        const v4d x0 = load4(s[0] + o), x1 = load4(s[1] + o), x2 = load4(s[2] + o);
        for (std::size_t c = 0; c < CG; ++c) {
          const v4d gv = load4(gy + (co + c) * gy_stride + o);
          acc[c][0] += gv * x0;
          acc[c][1] += gv * x1;
          acc[c][2] += gv * x2;
        }
      }
      for (std::size_t c = 0; c < CG; ++c) {
        const double* g = gy + (co + c) * gy_stride;
        double* dst = gw + ((co + c) * c_in + ci) * T;
        for (std::size_t b = 0; b < nt; ++b) {
          double tail = 0.0;
          for (std::size_t o = full; o < len; ++o) tail += g[o] * s[b][o];
          store4(lanes, acc[c][b]);
          dst[t0 + b] += ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail;
        }
      }
    }
  }
}

void accumulate_weight_grad(const double* gy, std::size_t gy_stride, std::size_t c_out, const double* x,
                            std::size_t x_stride, std::size_t c_in, std::span<const std::size_t> off, double* gw,
                            std::size_t len) {
  std::size_t co = 0;
  for (; co + kGroup <= c_out; co += kGroup)
    weight_grad_block<kGroup>(gy, gy_stride, co, x, x_stride, c_in, off, gw, len);
  for (; co < c_out; ++co) weight_grad_block<1>(gy, gy_stride, co, x, x_stride, c_in, off, gw, len);
}

}  // namespace

// ---------------------------------------------------------------- conv3d

Conv3dParams make_conv3d(std::size_t c_out, std::size_t c_in, std::size_t kernel, std::size_t stride,
                         std::size_t padding) {
  require(kernel >= 1 && stride >= 1, ErrorKind::argument, "kernel and stride must be at least 1");
  return {Tensor({c_out, c_in, kernel, kernel, kernel}), Tensor({c_out}), stride, padding};
}

Shape conv3d_output_shape(const Shape& in, const Conv3dParams& p) {
  const Shape& k = p.weights.shape();
  require(k.size() == 5, ErrorKind::shape, "conv weights must be (C_out, C_in, kd, kh, kw)");
  require(p.stride >= 1, ErrorKind::argument, "conv stride must be at least 1");
  require(p.bias.size() == k[0], ErrorKind::shape, "conv bias length must equal C_out");
  require(in[1] == k[1], ErrorKind::shape,
          "input has " + std::to_string(in[1]) + " channels, kernel expects " + std::to_string(k[1]));
  Shape out{in[0], k[0], 0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    std::size_t padded = in[2 + a] + 2 * p.padding;
    require(padded >= k[2 + a], ErrorKind::shape, "kernel larger than padded input " + shape_string(in));
    out[2 + a] = (padded - k[2 + a]) / p.stride + 1;
  }
  return out;
}

namespace {

ConvForward conv3d_forward_strided(const Tensor& x, const Conv3dParams& p, const Shape& out_shape) {
  const Shape& ks = p.weights.shape();
  const std::size_t N = x.dim(0), Ci = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t Co = ks[0], KD = ks[2], KH = ks[3], KW = ks[4];
  const std::size_t Do = out_shape[2], Ho = out_shape[3], Wo = out_shape[4];
  const std::size_t s = p.stride, pad = p.padding;

  Tensor y(out_shape);
  const double* xd = x.data();
  const double* wd = p.weights.data();
  double* yd = y.data();

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      double* yc = yd + (n * Co + co) * Do * Ho * Wo;
      std::fill(yc, yc + Do * Ho * Wo, p.bias[co]);
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* xc = xd + (n * Ci + ci) * D * H * W;
        for (std::size_t kd = 0; kd < KD; ++kd) {
          const Range rd = valid_outputs(D, Do, kd, s, pad);
          for (std::size_t kh = 0; kh < KH; ++kh) {
            const Range rh = valid_outputs(H, Ho, kh, s, pad);
            for (std::size_t kw = 0; kw < KW; ++kw) {
              const Range rw = valid_outputs(W, Wo, kw, s, pad);
              const double wv = wd[(((co * Ci + ci) * KD + kd) * KH + kh) * KW + kw];
              for (std::size_t od = rd.lo; od < rd.hi; ++od) {
                const std::size_t id = od * s + kd - pad;
                for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                  const std::size_t ih = oh * s + kh - pad;
                  double* yrow = yc + (od * Ho + oh) * Wo;
                  const double* xrow = xc + (id * H + ih) * W + kw - pad;
                  if (s == 1) {
                    for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += wv * xrow[ow];
                  } else {
                    for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) yrow[ow] += wv * xrow[ow * s];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return {std::move(y), ConvContext{x, out_shape, false}};
}

ConvGradients conv3d_backward_strided(const Tensor& grad_y, ConvContext& ctx, const Conv3dParams& p,
                                      bool need_input_grad);

}  // namespace

ConvForward conv3d_forward(const Tensor& x, const Conv3dParams& p) {
  require_rank5(x, "conv3d");
  const Shape out_shape = conv3d_output_shape(x.shape(), p);
  if (p.stride == 1) {
    const Shape& ks = p.weights.shape();
    const std::size_t N = x.dim(0), Ci = x.dim(1), Co = ks[0];
    const PaddedGeometry g(x.dim(2), x.dim(3), x.dim(4), p.padding, ks);
    const std::size_t out_count = g.Do * g.Ho * g.Wo;
    Tensor y(out_shape);
    std::vector<double> xp(Ci * g.stride);
    std::vector<double> acc(Co * g.span);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t ci = 0; ci < Ci; ++ci)
        g.pad_into(x.data() + (n * Ci + ci) * g.D * g.H * g.W, xp.data() + ci * g.stride);
      correlate_taps(xp.data(), g.stride, Ci, g.taps, p.weights.data(), Co, p.bias.data(), acc.data(), g.span,
                     g.span);
      for (std::size_t co = 0; co < Co; ++co) {
        const double* a = acc.data() + co * g.span;
        double* yc = y.data() + (n * Co + co) * out_count;
        for (std::size_t od = 0; od < g.Do; ++od)
          for (std::size_t oh = 0; oh < g.Ho; ++oh)
            std::copy(a + od * g.plane + oh * g.Wp, a + od * g.plane + oh * g.Wp + g.Wo, yc + (od * g.Ho + oh) * g.Wo);
      }
    }
    return {std::move(y), ConvContext{x, out_shape, false}};
  }
  return conv3d_forward_strided(x, p, out_shape);
}

ConvGradients conv3d_backward(const Tensor& grad_y, ConvContext& ctx, const Conv3dParams& p, bool need_input_grad) {
  require(grad_y.shape() == ctx.output_shape, ErrorKind::contract,
          "conv3d grad " + shape_string(grad_y.shape()) + " does not match forward output " +
              shape_string(ctx.output_shape));
  require(p.weights.rank() == 5 && ctx.input.dim(1) == p.weights.dim(1), ErrorKind::contract,
          "conv3d params do not match the forward context");
  mark_consumed(ctx.consumed, "conv3d");
  if (p.stride != 1) return conv3d_backward_strided(grad_y, ctx, p, need_input_grad);

  const Tensor& x = ctx.input;
  const Shape& ks = p.weights.shape();
  const std::size_t N = x.dim(0), Ci = x.dim(1), Co = ks[0];
  const PaddedGeometry g(x.dim(2), x.dim(3), x.dim(4), p.padding, ks);
  const std::size_t T = g.taps.size();
  const std::size_t in_count = g.D * g.H * g.W;
  const std::size_t out_count = g.Do * g.Ho * g.Wo;
  // grad_x is a correlation of grad_y with the same taps mirrored; grad_y is
  // stored with `lead` zeros in front so the mirrored offsets stay non-negative.
  const std::size_t lead = g.taps.back();
  const std::size_t gy_stride = lead + g.stride + PaddedGeometry::kSlack;
  std::vector<std::size_t> mirrored(T);
  for (std::size_t t = 0; t < T; ++t) mirrored[t] = lead - g.taps[t];
  std::vector<double> w_t;
  if (need_input_grad) {
    w_t.resize(Ci * Co * T);
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t ci = 0; ci < Ci; ++ci)
        for (std::size_t t = 0; t < T; ++t) w_t[(ci * Co + co) * T + t] = p.weights[(co * Ci + ci) * T + t];
  }

  ConvGradients grads{need_input_grad ? Tensor(x.shape()) : Tensor(), Tensor(ks), Tensor({Co})};
  std::vector<double> xp(Ci * g.stride);
  std::vector<double> gyp(Co * gy_stride);
  std::vector<double> gxp(need_input_grad ? Ci * g.volume : 0);

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t ci = 0; ci < Ci; ++ci)
      g.pad_into(x.data() + (n * Ci + ci) * in_count, xp.data() + ci * g.stride);
    // Scatter grad_y into the padded pitch; scratch positions stay zero.
    std::fill(gyp.begin(), gyp.end(), 0.0);
    for (std::size_t co = 0; co < Co; ++co) {
      const double* gyc = grad_y.data() + (n * Co + co) * out_count;
      double acc = 0.0;
      for (std::size_t i = 0; i < out_count; ++i) acc += gyc[i];
      grads.grad_b[co] += acc;
      double* dst = gyp.data() + co * gy_stride + lead;
      for (std::size_t od = 0; od < g.Do; ++od)
        for (std::size_t oh = 0; oh < g.Ho; ++oh)
          std::copy(gyc + (od * g.Ho + oh) * g.Wo, gyc + (od * g.Ho + oh + 1) * g.Wo, dst + od * g.plane + oh * g.Wp);
    }
    accumulate_weight_grad(gyp.data() + lead, gy_stride, Co, xp.data(), g.stride, Ci, g.taps, grads.grad_w.data(),
                           g.span);
    if (!need_input_grad) continue;
    correlate_taps(gyp.data(), gy_stride, Co, mirrored, w_t.data(), Ci, nullptr, gxp.data(), g.volume, g.volume);
    for (std::size_t ci = 0; ci < Ci; ++ci) {
      double* gxc = grads.grad_x.data() + (n * Ci + ci) * in_count;
      for (std::size_t d = 0; d < g.D; ++d)
        for (std::size_t h = 0; h < g.H; ++h) {
          const double* src = gxp.data() + ci * g.volume + (d + g.pad) * g.plane + (h + g.pad) * g.Wp + g.pad;
          std::copy(src, src + g.W, gxc + (d * g.H + h) * g.W);
        }
    }
  }
  return grads;
}

namespace {

ConvGradients conv3d_backward_strided(const Tensor& grad_y, ConvContext& ctx, const Conv3dParams& p,
                                      bool need_input_grad) {
  const Tensor& x = ctx.input;
  const Shape& ks = p.weights.shape();
  const std::size_t N = x.dim(0), Ci = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t Co = ks[0], KD = ks[2], KH = ks[3], KW = ks[4];
  const std::size_t Do = grad_y.dim(2), Ho = grad_y.dim(3), Wo = grad_y.dim(4);
  const std::size_t s = p.stride, pad = p.padding;

  ConvGradients g{need_input_grad ? Tensor(x.shape()) : Tensor(), Tensor(ks), Tensor({Co})};
  const double* xd = x.data();
  const double* gyd = grad_y.data();
  const double* wd = p.weights.data();
  double* gxd = need_input_grad ? g.grad_x.data() : nullptr;
  double* gwd = g.grad_w.data();

  for (std::size_t co = 0; co < Co; ++co) {
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* gyc = gyd + (n * Co + co) * Do * Ho * Wo;
      for (std::size_t i = 0; i < Do * Ho * Wo; ++i) acc += gyc[i];
    }
    g.grad_b[co] = acc;
  }

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      const double* gyc = gyd + (n * Co + co) * Do * Ho * Wo;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* xc = xd + (n * Ci + ci) * D * H * W;
        double* gxc = gxd ? gxd + (n * Ci + ci) * D * H * W : nullptr;
        for (std::size_t kd = 0; kd < KD; ++kd) {
          const Range rd = valid_outputs(D, Do, kd, s, pad);
          for (std::size_t kh = 0; kh < KH; ++kh) {
            const Range rh = valid_outputs(H, Ho, kh, s, pad);
            for (std::size_t kw = 0; kw < KW; ++kw) {
              const Range rw = valid_outputs(W, Wo, kw, s, pad);
              const std::size_t widx = (((co * Ci + ci) * KD + kd) * KH + kh) * KW + kw;
              const double wv = wd[widx];
              double gw = 0.0;
              for (std::size_t od = rd.lo; od < rd.hi; ++od) {
                const std::size_t id = od * s + kd - pad;
                for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                  const std::size_t ih = oh * s + kh - pad;
                  const double* gyrow = gyc + (od * Ho + oh) * Wo;
                  const std::size_t xoff = (id * H + ih) * W + kw - pad;
                  const std::size_t len = rw.hi - rw.lo;
                  if (s == 1) {
                    gw += dot_contiguous(gyrow + rw.lo, xc + xoff + rw.lo, len);
                    if (gxc) {
                      double* gxrow = gxc + xoff;
                      for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) gxrow[ow] += wv * gyrow[ow];
                    }
                  } else {
                    gw += dot_strided(gyrow + rw.lo, xc + xoff + rw.lo * s, len, s);
                    if (gxc) {
                      double* gxrow = gxc + xoff;
                      for (std::size_t ow = rw.lo; ow < rw.hi; ++ow) gxrow[ow * s] += wv * gyrow[ow];
                    }
                  }
                }
              }
              gwd[widx] += gw;
            }
          }
        }
      }
    }
  }
  return g;
}

}  // namespace

// ------------------------------------------------------------ batch norm

BatchNormParams make_batchnorm(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Tensor({channels}, 1.0);
  p.beta = Tensor({channels}, 0.0);
  p.running_mean = Tensor({channels}, 0.0);
  p.running_var = Tensor({channels}, 1.0);
  return p;
}

namespace {

void check_bn(const Tensor& x, const BatchNormParams& p) {
  require_rank5(x, "batchnorm");
  const std::size_t C = x.dim(1);
  require(p.gamma.size() == C && p.beta.size() == C && p.running_mean.size() == C && p.running_var.size() == C,
          ErrorKind::shape, "batchnorm params sized for a different channel count than " + std::to_string(C));
  require(p.epsilon > 0.0, ErrorKind::argument, "batchnorm epsilon must be positive");
}

BatchNormForward normalize_with(const Tensor& x, const BatchNormParams& p, const std::vector<double>& mean,
                                const std::vector<double>& var, Mode mode) {
  const std::size_t N = x.dim(0), C = x.dim(1), S = fan_positions(x.shape());
  BatchNormForward out{Tensor(x.shape()), BatchNormContext{Tensor(x.shape()), std::vector<double>(C), mode, false}};
  for (std::size_t c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + p.epsilon);
    out.ctx.inv_std[c] = inv;
    const double g = p.gamma[c], b = p.beta[c], m = mean[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double xh = (x[off + i] - m) * inv;
        out.ctx.x_hat[off + i] = xh;
        out.y[off + i] = g * xh + b;
      }
    }
  }
  return out;
}

}  // namespace

BatchNormForward batchnorm_forward(const Tensor& x, BatchNormParams& p, Mode mode) {
  if (mode == Mode::infer) return batchnorm_infer(x, p);
  check_bn(x, p);
  const std::size_t N = x.dim(0), C = x.dim(1), S = fan_positions(x.shape());
  const std::size_t count = N * S;
  require(count >= 2, ErrorKind::shape, "train-mode batchnorm needs at least 2 values per channel");
  std::vector<double> mean(C, 0.0), var(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* row = x.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) sum += row[i];
    }
    mean[c] = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* row = x.data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        const double d = row[i] - mean[c];
        sq += d * d;
      }
    }
    var[c] = sq / static_cast<double>(count);
  }
  auto out = normalize_with(x, p, mean, var, Mode::train);
  const double m = p.momentum_stat;
  for (std::size_t c = 0; c < C; ++c) {
    p.running_mean[c] = (1.0 - m) * p.running_mean[c] + m * mean[c];
    p.running_var[c] = (1.0 - m) * p.running_var[c] + m * var[c];
  }
  p.has_running_stats = true;
  return out;
}

BatchNormForward batchnorm_infer(const Tensor& x, const BatchNormParams& p) {
  check_bn(x, p);
  require(p.has_running_stats, ErrorKind::state, "batchnorm has no running statistics yet; train first");
  const std::size_t C = x.dim(1);
  std::vector<double> mean(p.running_mean.values().begin(), p.running_mean.values().end());
  std::vector<double> var(p.running_var.values().begin(), p.running_var.values().end());
  for (std::size_t c = 0; c < C; ++c)
    require(var[c] >= 0.0, ErrorKind::state, "negative running variance");
  return normalize_with(x, p, mean, var, Mode::infer);
}

BatchNormGradients batchnorm_backward(const Tensor& grad_y, BatchNormContext& ctx, const BatchNormParams& p) {
  require(grad_y.shape() == ctx.x_hat.shape(), ErrorKind::contract,
          "batchnorm grad " + shape_string(grad_y.shape()) + " does not match forward output");
  require(p.gamma.size() == ctx.inv_std.size(), ErrorKind::contract, "batchnorm params do not match context");
  mark_consumed(ctx.consumed, "batchnorm");
  const std::size_t N = grad_y.dim(0), C = grad_y.dim(1), S = fan_positions(grad_y.shape());
  const double count = static_cast<double>(N * S);
  BatchNormGradients g{Tensor(grad_y.shape()), Tensor({C}), Tensor({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        sum_g += grad_y[off + i];
        sum_gx += grad_y[off + i] * ctx.x_hat[off + i];
      }
    }
    g.grad_beta[c] = sum_g;
    g.grad_gamma[c] = sum_gx;
    const double scale = p.gamma[c] * ctx.inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * S;
      if (ctx.mode == Mode::infer) {
        for (std::size_t i = 0; i < S; ++i) g.grad_x[off + i] = scale * grad_y[off + i];
      } else {
        for (std::size_t i = 0; i < S; ++i)
          g.grad_x[off + i] =
              scale * (grad_y[off + i] - sum_g / count - ctx.x_hat[off + i] * (sum_gx / count));
      }
    }
  }
  return g;
}

// --------------------------------------------------------------- maxpool

PoolForward maxpool3d_forward(const Tensor& x, PoolWindow window, std::size_t stride) {
  require_rank5(x, "maxpool3d");
  require(window.d >= 1 && window.h >= 1 && window.w >= 1 && stride >= 1, ErrorKind::argument,
          "pool window and stride must be at least 1");
  const std::size_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  require(window.d <= D && window.h <= H && window.w <= W, ErrorKind::shape,
          "pool window larger than spatial extent " + shape_string(x.shape()));
  const std::size_t Do = (D - window.d) / stride + 1;
  const std::size_t Ho = (H - window.h) / stride + 1;
  const std::size_t Wo = (W - window.w) / stride + 1;
  Shape out_shape{N, C, Do, Ho, Wo};
  PoolForward out{Tensor(out_shape), PoolContext{x.shape(), out_shape, std::vector<std::size_t>(shape_size(out_shape)), false}};
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const std::size_t base = nc * D * H * W;
    for (std::size_t od = 0; od < Do; ++od)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
          std::size_t best = base + ((od * stride) * H + oh * stride) * W + ow * stride;
          double best_v = x[best];
          for (std::size_t p = 0; p < window.d; ++p)
            for (std::size_t q = 0; q < window.h; ++q)
              for (std::size_t r = 0; r < window.w; ++r) {
                const std::size_t idx = base + ((od * stride + p) * H + oh * stride + q) * W + ow * stride + r;
                if (x[idx] > best_v) {
                  best_v = x[idx];
                  best = idx;
                }
              }
          out.y[o] = best_v;
          out.ctx.argmax[o] = best;
        }
  }
  return out;
}

Tensor maxpool3d_backward(const Tensor& grad_y, PoolContext& ctx) {
  require(grad_y.shape() == ctx.output_shape, ErrorKind::contract,
          "maxpool grad " + shape_string(grad_y.shape()) + " does not match forward output " +
              shape_string(ctx.output_shape));
  mark_consumed(ctx.consumed, "maxpool3d");
  Tensor gx(ctx.input_shape);
  for (std::size_t o = 0; o < grad_y.size(); ++o) gx[ctx.argmax[o]] += grad_y[o];
  return gx;
}

// ------------------------------------------------------------------ relu

ReluForward relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return {std::move(y), ReluContext{x, false}};
}

Tensor relu_backward(const Tensor& grad_y, ReluContext& ctx) {
  require(grad_y.shape() == ctx.input.shape(), ErrorKind::contract, "relu grad does not match forward output");
  mark_consumed(ctx.consumed, "relu");
  Tensor gx(grad_y.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = ctx.input[i] > 0.0 ? grad_y[i] : 0.0;
  return gx;
}

// ----------------------------------------------------------------- dense

DenseParams make_dense(std::size_t c_out, std::size_t c_in) { return {Tensor({c_out, c_in}), Tensor({c_out})}; }

DenseForward dense_forward(const Tensor& x, const DenseParams& p) {
  require(x.rank() == 2, ErrorKind::shape, "dense expects (N, C), got " + shape_string(x.shape()));
  require(p.weights.rank() == 2 && p.bias.size() == p.weights.dim(0), ErrorKind::shape,
          "dense params must be W (C_out, C_in) and b (C_out)");
  require(x.dim(1) == p.weights.dim(1), ErrorKind::shape,
          "dense input width " + std::to_string(x.dim(1)) + " != " + std::to_string(p.weights.dim(1)));
  const std::size_t N = x.dim(0), Ci = x.dim(1), Co = p.weights.dim(0);
  Tensor y({N, Co});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o) {
      double s = p.bias[o];
      const double* wrow = p.weights.data() + o * Ci;
      const double* xrow = x.data() + n * Ci;
      for (std::size_t c = 0; c < Ci; ++c) s += wrow[c] * xrow[c];
      y[n * Co + o] = s;
    }
  return {std::move(y), DenseContext{x, false}};
}

DenseGradients dense_backward(const Tensor& grad_y, DenseContext& ctx, const DenseParams& p) {
  const std::size_t N = ctx.input.dim(0), Ci = ctx.input.dim(1), Co = p.weights.dim(0);
  require(grad_y.shape() == Shape({N, Co}) && p.weights.dim(1) == Ci, ErrorKind::contract,
          "dense grad " + shape_string(grad_y.shape()) + " does not match forward output");
  mark_consumed(ctx.consumed, "dense");
  DenseGradients g{Tensor(ctx.input.shape()), Tensor(p.weights.shape()), Tensor({Co})};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < Co; ++o) {
      const double gy = grad_y[n * Co + o];
      g.grad_b[o] += gy;
      const double* xrow = ctx.input.data() + n * Ci;
      const double* wrow = p.weights.data() + o * Ci;
      double* gwrow = g.grad_w.data() + o * Ci;
      double* gxrow = g.grad_x.data() + n * Ci;
      for (std::size_t c = 0; c < Ci; ++c) {
        gwrow[c] += gy * xrow[c];
        gxrow[c] += gy * wrow[c];
      }
    }
  return g;
}

// --------------------------------------------------------------- softmax

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 2, ErrorKind::shape, "softmax expects (N, C), got " + shape_string(logits.shape()));
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = logits.data() + n * C;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      out[n * C + c] = std::exp(row[c] - mx);
      sum += out[n * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) out[n * C + c] /= sum;
  }
  return out;
}

}  // namespace archshape
