#include "archshape/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "archshape/error.hpp"

namespace archshape {
namespace {

void require_field(const Tensor& t) {
  require(t.rank() == 3, ErrorKind::shape, "expected a (D, H, W) field, got " + shape_string(t.shape()));
}

/// Maps plane coordinates (r, c) and the depth along `axis` to a flat index.
struct PlaneIndexer {
  std::size_t strides[3];
  std::size_t rows, cols, depth;
  std::size_t ax, ar, ac;

  PlaneIndexer(const Shape& s, Axis axis) {
    strides[0] = s[1] * s[2];
    strides[1] = s[2];
    strides[2] = 1;
    ax = static_cast<std::size_t>(axis);
    ar = ax == 0 ? 1 : 0;
    ac = ax == 2 ? 1 : 2;
    rows = s[ar];
    cols = s[ac];
    depth = s[ax];
  }

  std::size_t operator()(std::size_t r, std::size_t c, std::size_t d) const {
    return r * strides[ar] + c * strides[ac] + d * strides[ax];
  }
};

}  // namespace

Tensor input_gradient(const Model& model, const VoxelGrid& x, std::size_t target, ScoreKind score) {
  require(target < model.config.num_classes, ErrorKind::argument,
          "target class " + std::to_string(target) + " >= num_classes " + std::to_string(model.config.num_classes));
  const GridDims& d = x.dims();
  const std::size_t R = model.config.resolution;
  require(d.d == R && d.h == R && d.w == R, ErrorKind::shape,
          "grid is " + std::to_string(d.d) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w) +
              ", model resolution is " + std::to_string(R));
  auto fwd = forward(model, x.to_tensor());
  const std::size_t C = model.config.num_classes;
  Tensor seed({1, C});
  if (score == ScoreKind::logit) {
    seed[target] = 1.0;
  } else {
    const double pc = fwd.probs[target];
    for (std::size_t c = 0; c < C; ++c) seed[c] = pc * ((c == target ? 1.0 : 0.0) - fwd.probs[c]);
  }
  auto back = backward(model, fwd, seed, true);
  return back.input_grad.reshaped({d.d, d.h, d.w});
}

Tensor importance_map(const Tensor& gradient, ImportanceMode mode) {
  Tensor m(gradient.shape());
  switch (mode) {
    case ImportanceMode::abs:
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::abs(gradient[i]);
      return m;
    case ImportanceMode::square:
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = gradient[i] * gradient[i];
      return m;
  }
  throw Error(ErrorKind::argument, "unknown importance mode");
}

Tensor normalize(const Tensor& importance) {
  Tensor out(importance.shape());
  if (importance.empty()) return out;
  auto [lo_it, hi_it] = std::minmax_element(importance.values().begin(), importance.values().end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (importance[i] - lo) / span;
  return out;
}

Projection2D project(const Tensor& field, Axis axis) {
  require_field(field);
  PlaneIndexer at(field.shape(), axis);
  Projection2D p{axis, Matrix({at.rows, at.cols})};
  for (std::size_t r = 0; r < at.rows; ++r)
    for (std::size_t c = 0; c < at.cols; ++c) {
      double m = field[at(r, c, 0)];
      for (std::size_t d = 1; d < at.depth; ++d) m = std::max(m, field[at(r, c, d)]);
      p.values[r * at.cols + c] = m;
    }
  return p;
}

Matrix slice(const Tensor& field, Axis axis, std::size_t index) {
  require_field(field);
  PlaneIndexer at(field.shape(), axis);
  require(index < at.depth, ErrorKind::argument,
          "slice index " + std::to_string(index) + " outside [0, " + std::to_string(at.depth) + ")");
  Matrix s({at.rows, at.cols});
  for (std::size_t r = 0; r < at.rows; ++r)
    for (std::size_t c = 0; c < at.cols; ++c) s[r * at.cols + c] = field[at(r, c, index)];
  return s;
}

RankBandMap rank_bands(const Tensor& normalized, const VoxelGrid& occupancy) {
  require_field(normalized);
  const GridDims& d = occupancy.dims();
  require(normalized.dim(0) == d.d && normalized.dim(1) == d.h && normalized.dim(2) == d.w, ErrorKind::shape,
          "saliency field and occupancy grid dims differ");
  std::vector<std::size_t> occupied;
  for (std::size_t i = 0; i < occupancy.size(); ++i)
    if (occupancy[i] != 0.0f) occupied.push_back(i);
  require(!occupied.empty(), ErrorKind::empty_form, "no occupied voxels to rank");

  std::stable_sort(occupied.begin(), occupied.end(),
                   [&](std::size_t a, std::size_t b) { return normalized[a] > normalized[b]; });
  RankBandMap map;
  map.dims = d;
  map.bands.assign(occupancy.size(), 0);
  const std::size_t n = occupied.size();
  for (std::size_t band = 1; band <= 10; ++band) {
    const std::size_t lo = (band - 1) * n / 10;
    const std::size_t hi = band * n / 10;
    for (std::size_t r = lo; r < hi; ++r) map.bands[occupied[r]] = static_cast<std::uint8_t>(band);
    map.counts[band - 1] = hi - lo;
    if (band < 10) map.thresholds[band - 1] = normalized[occupied[std::max<std::size_t>(hi, 1) - 1]];
  }
  return map;
}

VoxelGrid band_grid(const RankBandMap& bands) {
  VoxelGrid g(bands.dims, ValueKind::scalar);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(bands.bands[i]);
  return g;
}

SaliencyResult compute_saliency(const Model& model, const VoxelGrid& x, ImportanceMode mode, TargetSource source,
                                std::size_t true_label, ScoreKind score) {
  SaliencyResult r;
  r.mode = mode;
  r.target_source = source;
  if (source == TargetSource::predicted) {
    r.target_class = argmax_rows(forward(model, x.to_tensor()).probs)[0];
  } else {
    r.target_class = true_label;
  }
  r.gradient = input_gradient(model, x, r.target_class, score);
  r.importance = importance_map(r.gradient, mode);
  r.normalized = normalize(r.importance);
  return r;
}

}  // namespace archshape
