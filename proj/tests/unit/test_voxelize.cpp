#include <gtest/gtest.h>

#include <cmath>

#include "archshape/random.hpp"
#include "archshape/voxelize.hpp"
#include "helpers.hpp"

namespace archshape {
namespace {

using test::box_mesh;
using test::throws_kind;

double center(std::size_t idx, std::size_t res) { return -0.5 + (static_cast<double>(idx) + 0.5) / res; }

bool inside_box(Vec3 p, Vec3 lo, Vec3 hi) {
  return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y && p.z > lo.z && p.z < hi.z;
}

TEST(Voxelize, UnitCubeSolidIsFull) {
  const auto [cube, report] = standardize(parse_mesh(std::string_view(test::kCubeObj), MeshFormat::obj));
  const auto grid = voxelize(cube, 8, FillMode::solid);
  EXPECT_EQ(grid.occupied_count(), 512u);
  EXPECT_DOUBLE_EQ(grid.voxel_size(), 1.0 / 8);
}

TEST(Voxelize, UnitCubeSurfaceIsShell) {
  const auto [cube, report] = standardize(parse_mesh(std::string_view(test::kCubeObj), MeshFormat::obj));
  const auto grid = voxelize(cube, 8, FillMode::surface);
  std::size_t shell = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t k = 0; k < 8; ++k) {
        const bool on_face = i == 0 || i == 7 || j == 0 || j == 7 || k == 0 || k == 7;
        shell += on_face;
        EXPECT_EQ(grid(i, j, k), on_face ? 1.0f : 0.0f) << i << "," << j << "," << k;
      }
  EXPECT_EQ(shell, 296u);
  EXPECT_EQ(grid.occupied_count(), 296u);
}

TEST(Voxelize, HalfDomainBoxMatchesCenterOracle) {
  const Vec3 lo{-0.5, -0.5, -0.5}, hi{0.0, 0.5, 0.5};
  const auto grid = voxelize(box_mesh(lo, hi), 4, FillMode::solid);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k) {
        const bool in = inside_box({center(i, 4), center(j, 4), center(k, 4)}, lo, hi);
        expected += in;
        EXPECT_EQ(grid(i, j, k), in ? 1.0f : 0.0f);
      }
  EXPECT_EQ(expected, 32u);
  EXPECT_EQ(grid.occupied_count(), 32u);
}

TEST(Voxelize, SolidBracketedByBoxOracles) {
  // Every voxel whose center is inside is occupied; nothing outside the
  // closed box's cell cover is.
  const Vec3 lo{-0.31, -0.5, -0.44}, hi{0.27, 0.5, 0.5};
  const auto mesh = box_mesh(lo, hi);
  for (std::size_t res : {8u, 16u, 32u}) {
    const auto grid = voxelize(mesh, res, FillMode::solid);
    const double h = 1.0 / res;
    for (std::size_t i = 0; i < res; ++i)
      for (std::size_t j = 0; j < res; ++j)
        for (std::size_t k = 0; k < res; ++k) {
          const Vec3 c{center(i, res), center(j, res), center(k, res)};
          if (inside_box(c, lo, hi)) EXPECT_EQ(grid(i, j, k), 1.0f);
          const bool touches = c.x + h / 2 >= lo.x && c.x - h / 2 <= hi.x && c.y + h / 2 >= lo.y &&
                               c.y - h / 2 <= hi.y && c.z + h / 2 >= lo.z && c.z - h / 2 <= hi.z;
          if (!touches) EXPECT_EQ(grid(i, j, k), 0.0f);
        }
  }
}

TEST(Voxelize, VolumeConverges) {
  const Vec3 lo{-0.31, -0.5, -0.44}, hi{0.27, 0.5, 0.5};
  const double volume = (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z);
  double previous = 1.0;
  for (std::size_t res : {8u, 16u, 32u, 64u}) {
    const double err = std::abs(voxelize(box_mesh(lo, hi), res, FillMode::solid).occupied_fraction() - volume);
    EXPECT_LE(err, 6.0 / res) << res;
    EXPECT_LE(err, previous) << res;
    previous = err;
  }
}

TEST(Voxelize, SolidContainsSurface) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Vec3 lo, hi;
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = rng.uniform(-0.5, -0.05);
      hi[a] = rng.uniform(0.05, 0.5);
    }
    const auto mesh = box_mesh(lo, hi);
    const auto surface = voxelize(mesh, 12, FillMode::surface);
    const auto solid = voxelize(mesh, 12, FillMode::solid);
    for (std::size_t n = 0; n < surface.size(); ++n)
      if (surface[n] != 0.0f) EXPECT_EQ(solid[n], 1.0f);
    EXPECT_GE(solid.occupied_count(), surface.occupied_count());
  }
}

TEST(Voxelize, Deterministic) {
  const auto mesh = box_mesh({-0.4, -0.3, -0.5}, {0.2, 0.5, 0.1});
  EXPECT_EQ(write_voxel_file(voxelize(mesh, 16, FillMode::solid)),
            write_voxel_file(voxelize(mesh, 16, FillMode::solid)));
}

TEST(Voxelize, OpenMeshRejectedInSolidMode) {
  auto mesh = box_mesh({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
  mesh.triangles.erase(mesh.triangles.begin() + 2, mesh.triangles.begin() + 4);  // drop the top face
  EXPECT_TRUE(throws_kind(ErrorKind::watertight, [&] { voxelize(mesh, 8, FillMode::solid); }));
  EXPECT_GT(parity_disagreement(mesh, 8), 0.005);
  EXPECT_NO_THROW(voxelize(mesh, 8, FillMode::surface));
}

TEST(Voxelize, ResolutionBelowTwoRejected) {
  const auto mesh = box_mesh({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { voxelize(mesh, 1, FillMode::solid); }));
  EXPECT_EQ(voxelize(mesh, 2, FillMode::solid).occupied_count(), 8u);
  EXPECT_EQ(voxelize(mesh, 3, FillMode::solid).occupied_count(), 27u);
}

TEST(TriangleBox, OverlapCases) {
  const Vec3 c{0, 0, 0}, h{0.5, 0.5, 0.5};
  EXPECT_TRUE(triangle_box_overlap(c, h, {-1, -1, 0}, {1, -1, 0}, {0, 1, 0}));
  EXPECT_FALSE(triangle_box_overlap(c, h, {2, 2, 2}, {3, 2, 2}, {2, 3, 2}));
  EXPECT_TRUE(triangle_box_overlap(c, h, {0.5, -1, -1}, {0.5, 1, -1}, {0.5, 0, 1}));  // touching face
  EXPECT_FALSE(triangle_box_overlap(c, h, {0.9, 0.9, -1}, {0.9, 0.9, 1}, {2, 0, 0}));
}

TEST(VoxelFile, OnesPayload) {
  VoxelGrid grid = VoxelGrid::cube(2, ValueKind::occupancy);
  for (auto& v : grid.values()) v = 1.0f;
  const Bytes bytes = write_voxel_file(grid);
  ASSERT_EQ(bytes.size(), 17u + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VXG1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[16], 0);
  for (std::size_t n = 17; n < bytes.size(); ++n) EXPECT_EQ(bytes[n], 0x01);
}

TEST(VoxelFile, RoundTripsBitwise) {
  Rng rng(11);
  VoxelGrid occ({3, 4, 5}, ValueKind::occupancy);
  VoxelGrid scalar({5, 2, 3}, ValueKind::scalar);
  for (auto& v : occ.values()) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
  for (auto& v : scalar.values()) v = static_cast<float>(rng.uniform(-10, 10));
  for (const auto* grid : {&occ, &scalar}) {
    const Bytes bytes = write_voxel_file(*grid);
    const VoxelGrid back = read_voxel_file(bytes);
    EXPECT_EQ(back.dims(), grid->dims());
    EXPECT_EQ(back.kind(), grid->kind());
    EXPECT_TRUE(std::equal(back.values().begin(), back.values().end(), grid->values().begin()));
    EXPECT_EQ(write_voxel_file(back), bytes);
  }
}

TEST(VoxelFile, MalformedRejected) {
  VoxelGrid grid = VoxelGrid::cube(4, ValueKind::occupancy);
  Bytes bytes = write_voxel_file(grid);
  bytes.pop_back();
  EXPECT_TRUE(throws_kind(ErrorKind::format, [&] { read_voxel_file(bytes); }));  // 63-byte payload

  Bytes magic = write_voxel_file(grid);
  magic[0] = 'X';
  EXPECT_TRUE(throws_kind(ErrorKind::format, [&] { read_voxel_file(magic); }));

  Bytes kind = write_voxel_file(grid);
  kind[16] = 7;
  EXPECT_TRUE(throws_kind(ErrorKind::format, [&] { read_voxel_file(kind); }));

  Bytes value = write_voxel_file(grid);
  value[20] = 2;
  EXPECT_TRUE(throws_kind(ErrorKind::format, [&] { read_voxel_file(value); }));
}

TEST(VoxelGrid, TensorAndScalarConversion) {
  VoxelGrid grid({2, 3, 4}, ValueKind::occupancy);
  grid(1, 2, 3) = 1.0f;
  const Tensor t = grid.to_tensor();
  EXPECT_EQ(t.shape(), (Shape{1, 1, 2, 3, 4}));
  EXPECT_EQ(t.at({0, 0, 1, 2, 3}), 1.0);
  EXPECT_EQ(grid.occupied_count(), 1u);

  Tensor field({2, 2, 2}, {0.5, 1, 2, 3, 4, 5, 6, 7});
  const VoxelGrid s = scalar_grid_from(field);
  EXPECT_EQ(s.kind(), ValueKind::scalar);
  EXPECT_EQ(s(0, 0, 0), 0.5f);
  EXPECT_TRUE(throws_kind(ErrorKind::shape, [] { scalar_grid_from(Tensor({2, 2})); }));
}

}  // namespace
}  // namespace archshape
