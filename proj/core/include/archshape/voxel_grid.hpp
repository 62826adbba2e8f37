#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "archshape/binary_io.hpp"
#include "archshape/mesh.hpp"
#include "archshape/tensor.hpp"

namespace archshape {

enum class ValueKind : std::uint8_t { occupancy = 0, scalar = 1 };

struct GridDims {
  std::size_t d = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const noexcept { return d * h * w; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept { return (i * h + j) * w + k; }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// D x H x W field stored as 32-bit floats in (i, j, k) order, k fastest.
/// Axis i maps to model x, j to y, k to z (up). Occupancy grids hold only 0 and 1.
///
/// The default placement fills the unit domain [-0.5, 0.5] along the longest
/// axis, which is what voxelize() produces for a standardized mesh.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(GridDims dims, ValueKind kind);
  VoxelGrid(GridDims dims, ValueKind kind, std::vector<float> data);

  static VoxelGrid cube(std::size_t resolution, ValueKind kind) {
    return VoxelGrid({resolution, resolution, resolution}, kind);
  }

  const GridDims& dims() const noexcept { return dims_; }
  ValueKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[dims_.index(i, j, k)]; }
  float operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[dims_.index(i, j, k)]; }
  float& operator[](std::size_t idx) { return data_[idx]; }
  float operator[](std::size_t idx) const { return data_[idx]; }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }

  Vec3 origin() const noexcept { return origin_; }
  double voxel_size() const noexcept { return voxel_size_; }
  void set_placement(Vec3 origin, double voxel_size);

  std::size_t occupied_count() const;
  double occupied_fraction() const { return static_cast<double>(occupied_count()) / static_cast<double>(size()); }

  /// Copies the values into a (1, 1, D, H, W) tensor.
  Tensor to_tensor() const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  GridDims dims_;
  ValueKind kind_ = ValueKind::occupancy;
  std::vector<float> data_;
  Vec3 origin_{-0.5, -0.5, -0.5};
  double voxel_size_ = 1.0;
};

/// Builds a scalar grid from a rank-3 tensor, narrowing to float.
VoxelGrid scalar_grid_from(const Tensor& field);

/// VXG1: "VXG1", u32 D, u32 H, u32 W, u8 kind, then the payload as u8
/// (occupancy) or little-endian f32 (scalar).
Bytes write_voxel_file(const VoxelGrid& grid);
VoxelGrid read_voxel_file(std::span<const std::uint8_t> bytes);

}  // namespace archshape
