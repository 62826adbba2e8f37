#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "archshape/manifest.hpp"
#include "archshape/voxel_grid.hpp"

namespace archshape {

// Two seeded procedural families of building massings on an R^3 grid with
// k as the vertical axis. "Machine" forms are regular parametric stacks;
// "human" forms are articulated unions of boxes with shafts and setbacks.

enum class FacadeType { flat, stepped, sheared };

struct MachineFormSpec {
  int unit_count = 1;              // >= 1
  double fill_coefficient = 1.0;   // (0, 1]
  FacadeType facade_type = FacadeType::flat;
  double core_fraction = 0.0;      // [0, 0.5]
  double rotation_shear_deg = 0.0; // [-45, 45]
  std::uint64_t seed = 0;
};

struct HumanFormSpec {
  int base_masses = 2;       // [2, 6]
  int subtraction_count = 1; // >= 1
  int setback_levels = 0;    // >= 0
  double asymmetry = 0.0;    // [0, 1]
  std::uint64_t seed = 0;
};

void validate(const MachineFormSpec& spec);
void validate(const HumanFormSpec& spec);

/// Half-open integer box [lo, hi) in (i, j, k).
struct Box {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};

  bool contains(int i, int j, int k) const {
    return i >= lo[0] && i < hi[0] && j >= lo[1] && j < hi[1] && k >= lo[2] && k < hi[2];
  }
  long volume() const;
  friend bool operator==(const Box&, const Box&) = default;
};

/// Where a machine form sits before voxels are drawn.
struct MachineLayout {
  /// Footprint region at the ground level; fill_coefficient is measured against it.
  Box region;
  /// One slab per unit, before shear.
  std::vector<Box> units;
  /// Centered core cut out of each unit's footprint (may be empty boxes).
  std::vector<Box> cores;
  /// Per-level i offset from the shear angle, indexed by k.
  std::vector<int> shear_offset;
};

MachineLayout machine_layout(const MachineFormSpec& spec, std::size_t resolution);
VoxelGrid gen_machine_form(const MachineFormSpec& spec, std::size_t resolution);

struct HumanFormPlan {
  /// Additive masses; setbacks appear as extra tiers stacked on a base box.
  std::vector<Box> masses;
  /// Vertical voids removed after the union.
  std::vector<Box> voids;
};

HumanFormPlan plan_human_form(const HumanFormSpec& spec, std::size_t resolution, int attempt = 0);
/// Union of masses minus voids, clipped to the grid.
VoxelGrid rasterize(const HumanFormPlan& plan, std::size_t resolution);
/// Retries planning until the result is one 6-connected component.
VoxelGrid gen_human_form(const HumanFormSpec& spec, std::size_t resolution);

bool is_six_connected(const VoxelGrid& grid);

struct DatasetCounts {
  std::size_t train = 0;  // per class
  std::size_t val = 0;    // per class, may be 0
  std::size_t test = 0;   // per class
};

/// Draws per-sample specs from fixed ranges seeded by `master_seed`, writes
/// each grid as VXG1 under out_dir/<split>/ and the manifest to
/// out_dir/manifest.tsv.
DatasetManifest gen_dataset(const DatasetCounts& counts, std::size_t resolution, std::uint64_t master_seed,
                            const std::filesystem::path& out_dir);

MachineFormSpec draw_machine_spec(std::uint64_t seed);
HumanFormSpec draw_human_spec(std::uint64_t seed);

}  // namespace archshape
