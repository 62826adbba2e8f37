#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "archshape/binary_io.hpp"
#include "archshape/datagen.hpp"
#include "archshape/random.hpp"
#include "helpers.hpp"

namespace archshape {
namespace {

using test::throws_kind;

// Occupied voxel count per level k.
std::vector<double> level_areas(const VoxelGrid& g) {
  const GridDims d = g.dims();
  std::vector<double> area(d.w, 0.0);
  for (std::size_t i = 0; i < d.d; ++i)
    for (std::size_t j = 0; j < d.h; ++j)
      for (std::size_t k = 0; k < d.w; ++k) area[k] += g(i, j, k);
  return area;
}

double footprint_variance(const VoxelGrid& g) {
  std::vector<double> areas;
  for (double a : level_areas(g))
    if (a > 0) areas.push_back(a);
  double mean = 0.0;
  for (double a : areas) mean += a;
  mean /= static_cast<double>(areas.size());
  double var = 0.0;
  for (double a : areas) var += (a - mean) * (a - mean);
  return var / static_cast<double>(areas.size());
}

TEST(MachineForm, FullSlab) {
  MachineFormSpec spec;
  spec.seed = 5;
  const auto layout = machine_layout(spec, 16);
  const VoxelGrid g = gen_machine_form(spec, 16);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      for (std::size_t k = 0; k < 16; ++k) {
        const bool in = layout.region.contains(static_cast<int>(i), static_cast<int>(j), static_cast<int>(k));
        inside += in;
        EXPECT_EQ(g(i, j, k), in ? 1.0f : 0.0f);
      }
  EXPECT_EQ(static_cast<long>(inside), layout.region.volume());
  EXPECT_EQ(g.occupied_count(), inside);
}

TEST(MachineForm, HalfFill) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    MachineFormSpec spec;
    spec.fill_coefficient = 0.5;
    spec.seed = seed;
    const auto layout = machine_layout(spec, 16);
    const VoxelGrid g = gen_machine_form(spec, 16);
    const int k = layout.region.lo[2];
    std::size_t filled = 0, footprint = 0;
    for (int i = layout.region.lo[0]; i < layout.region.hi[0]; ++i)
      for (int j = layout.region.lo[1]; j < layout.region.hi[1]; ++j) {
        ++footprint;
        filled += g(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) != 0.0f;
      }
    EXPECT_NEAR(static_cast<double>(filled) / static_cast<double>(footprint), 0.5, 1.0 / 16) << seed;
  }
}

TEST(MachineForm, CoreIsCarvedEveryLevel) {
  MachineFormSpec spec;
  spec.unit_count = 3;
  spec.core_fraction = 0.25;
  spec.seed = 9;
  const auto layout = machine_layout(spec, 32);
  const VoxelGrid g = gen_machine_form(spec, 32);
  for (std::size_t u = 0; u < layout.units.size(); ++u) {
    const Box& core = layout.cores[u];
    ASSERT_GT(core.volume(), 0);
    for (int k = core.lo[2]; k < core.hi[2]; ++k)
      for (int i = core.lo[0]; i < core.hi[0]; ++i)
        for (int j = core.lo[1]; j < core.hi[1]; ++j)
          EXPECT_EQ(g(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)), 0.0f);
  }
}

TEST(MachineForm, Deterministic) {
  const MachineFormSpec spec = draw_machine_spec(77);
  EXPECT_EQ(write_voxel_file(gen_machine_form(spec, 32)), write_voxel_file(gen_machine_form(spec, 32)));
}

TEST(MachineForm, ShearMovesCentroid) {
  double total_drift = 0.0;
  int sheared = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    MachineFormSpec spec = draw_machine_spec(seed);
    const VoxelGrid g = gen_machine_form(spec, 32);
    EXPECT_GT(g.occupied_fraction(), 0.0);
    EXPECT_LT(g.occupied_fraction(), 1.0);
    if (spec.rotation_shear_deg == 0.0) continue;
    spec.facade_type = FacadeType::flat;
    const VoxelGrid f = gen_machine_form(spec, 32);
    std::vector<double> ci;
    for (std::size_t k = 0; k < 32; ++k) {
      double sum = 0, count = 0;
      for (std::size_t i = 0; i < 32; ++i)
        for (std::size_t j = 0; j < 32; ++j)
          if (f(i, j, k) != 0.0f) {
            sum += static_cast<double>(i);
            ++count;
          }
      if (count > 0) ci.push_back(sum / count);
    }
    total_drift += std::abs(ci.back() - ci.front());
    ++sheared;
  }
  ASSERT_GT(sheared, 10);
  EXPECT_GT(total_drift / sheared, 0.0);
}

TEST(MachineForm, InvalidSpecs) {
  MachineFormSpec spec;
  spec.fill_coefficient = 0.0;
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { gen_machine_form(spec, 16); }));
  spec = {};
  spec.rotation_shear_deg = 50;
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { gen_machine_form(spec, 16); }));
  spec = {};
  spec.unit_count = 40;
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { gen_machine_form(spec, 16); }));
}

TEST(HumanForm, RasterIsUnionMinusVoids) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    HumanFormSpec spec;
    spec.base_masses = 2;
    spec.seed = seed;
    HumanFormPlan plan = plan_human_form(spec, 32);
    ASSERT_EQ(plan.masses.size(), 2u);
    const auto voids = plan.voids;
    plan.voids.clear();
    const VoxelGrid solid = rasterize(plan, 32);
    std::size_t union_count = 0;
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j)
        for (int k = 0; k < 32; ++k) {
          const bool in = plan.masses[0].contains(i, j, k) || plan.masses[1].contains(i, j, k);
          union_count += in;
          EXPECT_EQ(solid(i, j, k), in ? 1.0f : 0.0f);
        }
    EXPECT_EQ(solid.occupied_count(), union_count);

    plan.voids = voids;
    const VoxelGrid cut = rasterize(plan, 32);
    for (std::size_t n = 0; n < cut.size(); ++n) EXPECT_LE(cut[n], solid[n]);
  }
}

TEST(HumanForm, VoidsAreFullHeightShafts) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const HumanFormSpec spec = draw_human_spec(seed);
    const HumanFormPlan plan = plan_human_form(spec, 32);
    const VoxelGrid g = rasterize(plan, 32);
    for (const Box& v : plan.voids) {
      EXPECT_EQ(v.lo[2], 0);
      EXPECT_EQ(v.hi[2], 32);
      for (int i = v.lo[0]; i < v.hi[0]; ++i)
        for (int j = v.lo[1]; j < v.hi[1]; ++j)
          for (std::size_t k = 0; k < 32; ++k)
            EXPECT_EQ(g(static_cast<std::size_t>(i), static_cast<std::size_t>(j), k), 0.0f);
      // Each shaft keeps a rim of its host mass on all four sides.
      bool surrounded = false;
      for (const Box& m : plan.masses)
        surrounded |= m.lo[0] < v.lo[0] && v.hi[0] < m.hi[0] && m.lo[1] < v.lo[1] && v.hi[1] < m.hi[1];
      EXPECT_TRUE(surrounded) << seed;
    }
  }
}

TEST(HumanForm, ConnectedAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const HumanFormSpec spec = draw_human_spec(seed);
    const VoxelGrid g = gen_human_form(spec, 32);
    EXPECT_TRUE(is_six_connected(g)) << seed;
    EXPECT_GT(g.occupied_fraction(), 0.0);
    EXPECT_LT(g.occupied_fraction(), 1.0);
    if (seed < 5) {
      EXPECT_EQ(write_voxel_file(g), write_voxel_file(gen_human_form(spec, 32)));
    }
  }
}

TEST(HumanForm, InvalidSpecs) {
  HumanFormSpec spec;
  spec.base_masses = 7;
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { gen_human_form(spec, 16); }));
  spec = {};
  spec.subtraction_count = 0;
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { gen_human_form(spec, 16); }));
}

TEST(Connectivity, SixNeighbourhood) {
  VoxelGrid g = VoxelGrid::cube(3, ValueKind::occupancy);
  EXPECT_FALSE(is_six_connected(g));
  g(0, 0, 0) = 1.0f;
  EXPECT_TRUE(is_six_connected(g));
  g(1, 1, 0) = 1.0f;  // edge-diagonal only
  EXPECT_FALSE(is_six_connected(g));
  g(1, 0, 0) = 1.0f;
  EXPECT_TRUE(is_six_connected(g));
  g(2, 2, 2) = 1.0f;
  EXPECT_FALSE(is_six_connected(g));
}

TEST(Dataset, CountsFilesAndDeterminism) {
  test::TempDir a("gen_a"), b("gen_b");
  const DatasetCounts counts{20, 0, 10};
  const auto man = gen_dataset(counts, 16, 7, a.path());
  ASSERT_EQ(man.rows.size(), 60u);
  EXPECT_EQ(man.split("train").size(), 40u);
  EXPECT_EQ(man.split("test").size(), 20u);
  std::size_t machines = 0;
  std::set<std::string> paths;
  for (const auto& r : man.rows) {
    machines += r.label == Label::machine;
    paths.insert(r.path);
    const VoxelGrid g = read_voxel_file(read_file(a / r.path));
    EXPECT_EQ(g.dims(), (GridDims{16, 16, 16}));
    EXPECT_GT(g.occupied_count(), 0u);
  }
  EXPECT_EQ(machines, 30u);
  EXPECT_EQ(paths.size(), 60u);
  EXPECT_EQ(parse_manifest(as_text(read_file(a / "manifest.tsv"))).rows.size(), 60u);

  gen_dataset(counts, 16, 7, b.path());
  EXPECT_EQ(read_file(a / "manifest.tsv"), read_file(b / "manifest.tsv"));
  for (const auto& r : man.rows) EXPECT_EQ(read_file(a / r.path), read_file(b / r.path)) << r.path;
}

TEST(Dataset, Errors) {
  test::TempDir dir("gen_err");
  EXPECT_TRUE(throws_kind(ErrorKind::argument, [&] { gen_dataset({0, 0, 1}, 16, 1, dir.path()); }));
  write_file_atomic(dir / "blocker", std::string_view("x"));
  EXPECT_TRUE(throws_kind(ErrorKind::io, [&] { gen_dataset({1, 0, 1}, 16, 1, dir / "blocker"); }));
}

TEST(Dataset, ClassesSeparableByFootprintVariance) {
  std::vector<double> machine, human;
  for (std::uint64_t n = 0; n < 100; ++n) {
    machine.push_back(footprint_variance(gen_machine_form(draw_machine_spec(derive_seed(3, 1, n)), 32)));
    human.push_back(footprint_variance(gen_human_form(draw_human_spec(derive_seed(3, 0, n)), 32)));
  }
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair{mean, var / static_cast<double>(v.size() - 1)};
  };
  const auto [mm, vm] = stats(machine);
  const auto [mh, vh] = stats(human);
  const double se = std::sqrt(vm / 100.0 + vh / 100.0);
  EXPECT_GT(std::abs(mm - mh), 2.0 * se) << "machine " << mm << " human " << mh << " se " << se;
}

}  // namespace
}  // namespace archshape
