#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "archshape/model.hpp"
#include "archshape/voxel_grid.hpp"

namespace archshape {

enum class ImportanceMode { abs, square };
enum class TargetSource { true_label, predicted };
/// Which class score is differentiated: the pre-softmax logit or the softmax probability.
enum class ScoreKind { logit, probability };
enum class Axis { i = 0, j = 1, k = 2 };

/// Gradient of the target class score with respect to every input voxel,
/// taken through the infer-mode network. Returns a (D, H, W) field.
Tensor input_gradient(const Model& model, const VoxelGrid& x, std::size_t target,
                      ScoreKind score = ScoreKind::logit);

/// |G| or G^2 elementwise.
Tensor importance_map(const Tensor& gradient, ImportanceMode mode);

/// (M - min) / (max - min); a constant map normalizes to all zeros.
Tensor normalize(const Tensor& importance);

/// 2D matrix as a rank-2 tensor (rows, cols).
using Matrix = Tensor;

struct Projection2D {
  Axis axis = Axis::k;
  Matrix values;
};

/// Max along `axis`. The remaining two axes keep their order, so projecting
/// along k yields an (i, j) matrix and along i a (j, k) matrix.
Projection2D project(const Tensor& field, Axis axis);

/// The plane at `index` along `axis`, laid out like project().
Matrix slice(const Tensor& field, Axis axis, std::size_t index);

struct RankBandMap {
  /// 0 for unoccupied voxels, 1 (most salient decile) .. 10 (least).
  std::vector<std::uint8_t> bands;
  GridDims dims;
  /// Lowest saliency inside bands 1..9.
  std::array<double, 9> thresholds{};
  std::array<std::size_t, 10> counts{};
};

/// Deciles over occupied voxels sorted by saliency descending, ties by linear index.
RankBandMap rank_bands(const Tensor& normalized, const VoxelGrid& occupancy);

/// Band ids as a scalar VXG1-ready grid.
VoxelGrid band_grid(const RankBandMap& bands);

struct SaliencyResult {
  Tensor gradient;
  Tensor importance;
  Tensor normalized;
  ImportanceMode mode = ImportanceMode::abs;
  std::size_t target_class = 0;
  TargetSource target_source = TargetSource::true_label;
};

/// Full pipeline. With TargetSource::predicted the target is the model's
/// argmax and `true_label` is ignored.
SaliencyResult compute_saliency(const Model& model, const VoxelGrid& x, ImportanceMode mode, TargetSource source,
                                std::size_t true_label = 0, ScoreKind score = ScoreKind::logit);

}  // namespace archshape
