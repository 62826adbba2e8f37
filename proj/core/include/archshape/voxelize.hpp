#pragma once

#include <cstddef>

#include "archshape/mesh.hpp"
#include "archshape/voxel_grid.hpp"

namespace archshape {

enum class FillMode { surface, solid };

/// Rasterizes a standardized mesh into a resolution^3 occupancy grid over
/// [-0.5, 0.5]^3.
///
/// Surface mode marks every cell that intersects a triangle. Cells own their
/// upper faces: a triangle lying exactly on an interior grid plane marks the
/// cells below it, never the cells above. The lowest layer also owns its lower face.
///
/// Solid mode adds voxels whose centers are inside the mesh, by majority vote
/// of crossing parity along +x, +y and +z rays. If the three rays disagree on
/// more than 0.5% of voxels the mesh is rejected as not watertight.
VoxelGrid voxelize(const TriangleMesh& mesh, std::size_t resolution, FillMode fill);

/// Separating-axis overlap test between a triangle and a closed box.
bool triangle_box_overlap(const Vec3& box_center, const Vec3& half_extent, const Vec3& a, const Vec3& b,
                          const Vec3& c);

/// Fraction of voxels that would fail the three-ray parity agreement check.
double parity_disagreement(const TriangleMesh& mesh, std::size_t resolution);

}  // namespace archshape
