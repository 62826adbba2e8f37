#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace archshape {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double operator[](std::size_t axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  double& operator[](std::size_t axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle soup. Triangles with a repeated vertex index never make it
/// into `triangles`; they are tallied in `dropped_elements` instead.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string name;
  std::size_t dropped_elements = 0;

  friend bool operator==(const TriangleMesh&, const TriangleMesh&) = default;
};

enum class MeshFormat { obj, stl_ascii, stl_binary };

/// Parses OBJ (v/f records; faces with more than three corners are fanned
/// from the first corner) or STL. STL vertices are merged on exact bit
/// equality of their coordinates, in first-appearance order.
TriangleMesh parse_mesh(std::span<const std::uint8_t> bytes, MeshFormat format);
TriangleMesh parse_mesh(std::string_view text, MeshFormat format);

/// Picks a format from the file extension, telling binary STL apart from
/// ASCII by the declared facet count.
MeshFormat detect_mesh_format(std::string_view path, std::span<const std::uint8_t> bytes);

struct StandardizationReport {
  double applied_scale = 1.0;
  /// Added to every vertex before scaling: v' = (v + t) * s.
  Vec3 applied_translation;
  std::size_t dropped_elements = 0;
};

struct BoundingBox {
  Vec3 min;
  Vec3 max;
};

BoundingBox bounding_box(const TriangleMesh& mesh);

/// Centers the bounding box on the origin and scales uniformly so the longest
/// edge is 1. Zero-area triangles (area < 1e-12 after scaling) are dropped.
std::pair<TriangleMesh, StandardizationReport> standardize(const TriangleMesh& mesh);

}  // namespace archshape
