#include "archshape/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "archshape/binary_io.hpp"
#include "archshape/error.hpp"
#include "archshape/random.hpp"

namespace archshape {
namespace {

constexpr int kHumanAttempts = 16;

int margin_for(std::size_t resolution) { return std::max(1, static_cast<int>(resolution) / 16); }

int round_int(double v) { return static_cast<int>(std::lround(v)); }

bool empty_box(const Box& b) { return b.hi[0] <= b.lo[0] || b.hi[1] <= b.lo[1] || b.hi[2] <= b.lo[2]; }

/// Centered sub-rectangle of `b` covering roughly `fraction` of its footprint.
Box centered_core(const Box& b, double fraction) {
  Box core = b;
  if (fraction <= 0.0) {
    core.hi = core.lo;
    return core;
  }
  const double side = std::sqrt(fraction);
  for (int a = 0; a < 2; ++a) {
    const int w = b.hi[a] - b.lo[a];
    const int c = std::min(w - 2, round_int(side * w));
    if (c <= 0) {
      core.hi = core.lo;
      return core;
    }
    core.lo[a] = b.lo[a] + (w - c) / 2;
    core.hi[a] = core.lo[a] + c;
  }
  return core;
}

void stamp(VoxelGrid& g, const Box& b, float value) {
  const int R = static_cast<int>(g.dims().d);
  for (int i = std::max(0, b.lo[0]); i < std::min(R, b.hi[0]); ++i)
    for (int j = std::max(0, b.lo[1]); j < std::min(R, b.hi[1]); ++j)
      for (int k = std::max(0, b.lo[2]); k < std::min(R, b.hi[2]); ++k)
        g(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) = value;
}

/// Shifts box `b` along axis a so it lies inside [lo, hi) without resizing it.
void clamp_into(Box& b, int a, int lo, int hi) {
  const int w = std::min(b.hi[a] - b.lo[a], hi - lo);
  b.lo[a] = std::clamp(b.lo[a], lo, hi - w);
  b.hi[a] = b.lo[a] + w;
}

bool footprints_overlap(const Box& a, const Box& b) {
  return a.lo[0] < b.hi[0] && b.lo[0] < a.hi[0] && a.lo[1] < b.hi[1] && b.lo[1] < a.hi[1];
}

}  // namespace

long Box::volume() const {
  if (empty_box(*this)) return 0;
  return static_cast<long>(hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
}

void validate(const MachineFormSpec& s) {
  require(s.unit_count >= 1, ErrorKind::argument, "unit_count must be at least 1");
  require(s.fill_coefficient > 0.0 && s.fill_coefficient <= 1.0, ErrorKind::argument,
          "fill_coefficient must lie in (0, 1]");
  require(s.core_fraction >= 0.0 && s.core_fraction <= 0.5, ErrorKind::argument, "core_fraction must lie in [0, 0.5]");
  require(s.rotation_shear_deg >= -45.0 && s.rotation_shear_deg <= 45.0, ErrorKind::argument,
          "rotation_shear_deg must lie in [-45, 45]");
}

void validate(const HumanFormSpec& s) {
  require(s.base_masses >= 2 && s.base_masses <= 6, ErrorKind::argument, "base_masses must lie in [2, 6]");
  require(s.subtraction_count >= 1, ErrorKind::argument, "subtraction_count must be at least 1");
  require(s.setback_levels >= 0, ErrorKind::argument, "setback_levels must be non-negative");
  require(s.asymmetry >= 0.0 && s.asymmetry <= 1.0, ErrorKind::argument, "asymmetry must lie in [0, 1]");
}

// ------------------------------------------------------------- machine

MachineLayout machine_layout(const MachineFormSpec& spec, std::size_t resolution) {
  validate(spec);
  require(resolution >= 8, ErrorKind::argument, "form generation needs resolution >= 8");
  const int R = static_cast<int>(resolution);
  const int m = margin_for(resolution);
  const int max_height = R - 2 * m;
  require(spec.unit_count <= max_height, ErrorKind::argument,
          std::to_string(spec.unit_count) + " units do not fit in " + std::to_string(max_height) + " levels");
  Rng rng(spec.seed);

  const int min_side = std::min(8, R - 2 * m);
  const int fi = std::clamp(round_int(R * rng.uniform(0.45, 0.6)), min_side, R - 2 * m);
  const int fj = std::clamp(round_int(R * rng.uniform(0.45, 0.6)), min_side, R - 2 * m);
  const int height = std::clamp(round_int(R * rng.uniform(0.45, 0.8)), spec.unit_count, max_height);

  MachineLayout L;
  L.region.lo = {(R - fi) / 2, (R - fj) / 2, m};
  L.region.hi = {L.region.lo[0] + fi, L.region.lo[1] + fj, m + height};

  const int depth = std::max(1, round_int(spec.fill_coefficient * fj));
  Box base = L.region;
  base.lo[1] = L.region.lo[1] + (fj - depth) / 2;
  base.hi[1] = base.lo[1] + depth;

  const int jog = std::max(1, round_int(0.15 * fi));
  for (int u = 0; u < spec.unit_count; ++u) {
    Box unit = base;
    unit.lo[2] = m + u * height / spec.unit_count;
    unit.hi[2] = m + (u + 1) * height / spec.unit_count;
    if (spec.facade_type == FacadeType::stepped) {
      for (int a = 0; a < 2; ++a) {
        const int w = base.hi[a] - base.lo[a];
        const int inset = std::min(u, std::max(0, (w - 2) / 2));
        unit.lo[a] += inset;
        unit.hi[a] -= inset;
      }
    } else if (spec.facade_type == FacadeType::sheared && u % 2 == 1) {
      unit.lo[0] += jog;
      unit.hi[0] += jog;
    }
    L.units.push_back(unit);
    L.cores.push_back(centered_core(unit, spec.core_fraction));
  }

  L.shear_offset.assign(resolution, 0);
  const double slope = std::tan(spec.rotation_shear_deg * std::numbers::pi / 180.0);
  const int center_shift = round_int(slope * (height - 1) / 2.0);
  for (int k = m; k < m + height; ++k) L.shear_offset[static_cast<std::size_t>(k)] = round_int(slope * (k - m)) - center_shift;
  return L;
}

VoxelGrid gen_machine_form(const MachineFormSpec& spec, std::size_t resolution) {
  const MachineLayout L = machine_layout(spec, resolution);
  const int R = static_cast<int>(resolution);
  VoxelGrid g = VoxelGrid::cube(resolution, ValueKind::occupancy);
  for (std::size_t u = 0; u < L.units.size(); ++u) {
    const Box& unit = L.units[u];
    const Box& core = L.cores[u];
    for (int k = unit.lo[2]; k < unit.hi[2]; ++k) {
      const int off = L.shear_offset[static_cast<std::size_t>(k)];
      for (int i = unit.lo[0]; i < unit.hi[0]; ++i) {
        const int si = i + off;
        if (si < 0 || si >= R) continue;
        for (int j = std::max(0, unit.lo[1]); j < std::min(R, unit.hi[1]); ++j) {
          if (core.contains(i, j, k)) continue;
          g(static_cast<std::size_t>(si), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) = 1.0f;
        }
      }
    }
  }
  require(g.occupied_count() > 0, ErrorKind::empty_form, "machine form parameters produce no voxels");
  return g;
}

// --------------------------------------------------------------- human

HumanFormPlan plan_human_form(const HumanFormSpec& spec, std::size_t resolution, int attempt) {
  validate(spec);
  require(resolution >= 8, ErrorKind::argument, "form generation needs resolution >= 8");
  const int R = static_cast<int>(resolution);
  const int m = margin_for(resolution);
  const double a = spec.asymmetry;
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(attempt)));
  auto size = [&](double lo, double hi) { return std::max(3, round_int(R * rng.uniform(lo, hi))); };

  HumanFormPlan plan;
  {
    Box first;
    const int wi = size(0.25, 0.45), wj = size(0.25, 0.45), h = size(0.35, 0.8);
    const int jitter = round_int(a * R / 8.0);
    first.lo = {(R - wi) / 2 + static_cast<int>(rng.uniform_int(-jitter, jitter)),
                (R - wj) / 2 + static_cast<int>(rng.uniform_int(-jitter, jitter)), m};
    first.hi = {first.lo[0] + wi, first.lo[1] + wj, m + h};
    for (int ax = 0; ax < 3; ++ax) clamp_into(first, ax, m, R - m);
    plan.masses.push_back(first);
  }
  for (int n = 1; n < spec.base_masses; ++n) {
    const Box parent = plan.masses[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
    Box b;
    const int wi = size(0.15, 0.35 + 0.1 * a), wj = size(0.15, 0.35 + 0.1 * a), h = size(0.2, 0.85);
    b.lo[2] = m;
    b.hi[2] = m + h;
    for (int ax = 0; ax < 2; ++ax) {
      const int w = ax == 0 ? wi : wj;
      const int pw = parent.hi[ax] - parent.lo[ax];
      const double reach = std::max(0.0, (pw + w) / 2.0 - 1.0) * (0.5 + 0.5 * a);
      const int pc2 = parent.lo[ax] + parent.hi[ax];  // twice the parent center
      const int c = (pc2 + round_int(2.0 * reach * rng.uniform(-1.0, 1.0))) / 2;
      b.lo[ax] = c - w / 2;
      b.hi[ax] = b.lo[ax] + w;
    }
    for (int ax = 0; ax < 3; ++ax) clamp_into(b, ax, m, R - m);
    if (!footprints_overlap(b, parent)) {
      for (int ax = 0; ax < 2; ++ax) {
        const int w = b.hi[ax] - b.lo[ax];
        b.lo[ax] = (parent.lo[ax] + parent.hi[ax]) / 2 - w / 2;
        b.hi[ax] = b.lo[ax] + w;
        clamp_into(b, ax, m, R - m);
      }
    }
    plan.masses.push_back(b);
  }

  const std::size_t base_count = plan.masses.size();
  for (int s = 0; s < spec.setback_levels; ++s) {
    const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(plan.masses.size()) - 1));
    Box& lower = plan.masses[idx];
    const int h = lower.hi[2] - lower.lo[2];
    if (h < 4) continue;
    const int cut = lower.lo[2] + std::clamp(round_int(h * rng.uniform(0.4, 0.75)), 1, h - 1);
    Box upper = lower;
    upper.lo[2] = cut;
    lower.hi[2] = cut;
    bool shrunk = false;
    for (int ax = 0; ax < 2; ++ax) {
      int lo_in = static_cast<int>(rng.uniform_int(0, 2));
      int hi_in = static_cast<int>(rng.uniform_int(0, 2));
      while (upper.hi[ax] - hi_in - (upper.lo[ax] + lo_in) < 2 && (lo_in > 0 || hi_in > 0)) {
        if (lo_in >= hi_in) --lo_in; else --hi_in;
      }
      upper.lo[ax] += lo_in;
      upper.hi[ax] -= hi_in;
      shrunk |= lo_in > 0 || hi_in > 0;
    }
    if (!shrunk && upper.hi[0] - upper.lo[0] > 2) upper.hi[0] -= 1;
    plan.masses.push_back(upper);
  }

  for (int s = 0; s < spec.subtraction_count; ++s) {
    // Cut from a base mass wide enough to keep a one-voxel rim.
    std::vector<std::size_t> hosts;
    for (std::size_t b = 0; b < base_count; ++b)
      if (plan.masses[b].hi[0] - plan.masses[b].lo[0] >= 3 && plan.masses[b].hi[1] - plan.masses[b].lo[1] >= 3)
        hosts.push_back(b);
    if (hosts.empty()) break;
    const Box& host = plan.masses[hosts[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(hosts.size()) - 1))]];
    Box v;
    for (int ax = 0; ax < 2; ++ax) {
      const int inner = host.hi[ax] - host.lo[ax] - 2;
      const int w = static_cast<int>(rng.uniform_int(1, std::max(1, std::min(inner, (inner + 1) / 2))));
      v.lo[ax] = host.lo[ax] + 1 + static_cast<int>(rng.uniform_int(0, inner - w));
      v.hi[ax] = v.lo[ax] + w;
    }
    v.lo[2] = 0;
    v.hi[2] = R;
    plan.voids.push_back(v);
  }
  return plan;
}

VoxelGrid rasterize(const HumanFormPlan& plan, std::size_t resolution) {
  VoxelGrid g = VoxelGrid::cube(resolution, ValueKind::occupancy);
  for (const auto& b : plan.masses) stamp(g, b, 1.0f);
  for (const auto& v : plan.voids) stamp(g, v, 0.0f);
  return g;
}

bool is_six_connected(const VoxelGrid& grid) {
  const GridDims d = grid.dims();
  std::vector<std::size_t> stack;
  std::vector<std::uint8_t> seen(grid.size(), 0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] != 0.0f) {
      if (total == 0) {
        stack.push_back(i);
        seen[i] = 1;
      }
      ++total;
    }
  if (total == 0) return false;
  std::size_t reached = 0;
  while (!stack.empty()) {
    const std::size_t idx = stack.back();
    stack.pop_back();
    ++reached;
    const std::size_t i = idx / (d.h * d.w), j = (idx / d.w) % d.h, k = idx % d.w;
    auto visit = [&](std::size_t ni, std::size_t nj, std::size_t nk) {
      const std::size_t n = d.index(ni, nj, nk);
      if (grid[n] != 0.0f && !seen[n]) {
        seen[n] = 1;
        stack.push_back(n);
      }
    };
    if (i > 0) visit(i - 1, j, k);
    if (i + 1 < d.d) visit(i + 1, j, k);
    if (j > 0) visit(i, j - 1, k);
    if (j + 1 < d.h) visit(i, j + 1, k);
    if (k > 0) visit(i, j, k - 1);
    if (k + 1 < d.w) visit(i, j, k + 1);
  }
  return reached == total;
}

VoxelGrid gen_human_form(const HumanFormSpec& spec, std::size_t resolution) {
  for (int attempt = 0; attempt < kHumanAttempts; ++attempt) {
    VoxelGrid g = rasterize(plan_human_form(spec, resolution, attempt), resolution);
    if (is_six_connected(g)) return g;
  }
  throw Error(ErrorKind::generation,
              "no connected human form after " + std::to_string(kHumanAttempts) + " attempts (seed " +
                  std::to_string(spec.seed) + ")");
}

// ------------------------------------------------------------- dataset

MachineFormSpec draw_machine_spec(std::uint64_t seed) {
  Rng rng(seed);
  MachineFormSpec s;
  s.unit_count = static_cast<int>(rng.uniform_int(1, 5));
  s.fill_coefficient = rng.uniform(0.4, 1.0);
  s.facade_type = static_cast<FacadeType>(rng.uniform_int(0, 2));
  s.core_fraction = rng.bernoulli(0.5) ? rng.uniform(0.05, 0.3) : 0.0;
  s.rotation_shear_deg = rng.bernoulli(0.5) ? rng.uniform(-30.0, 30.0) : 0.0;
  s.seed = rng.next();
  return s;
}

HumanFormSpec draw_human_spec(std::uint64_t seed) {
  Rng rng(seed);
  HumanFormSpec s;
  s.base_masses = static_cast<int>(rng.uniform_int(2, 6));
  s.subtraction_count = static_cast<int>(rng.uniform_int(1, 3));
  s.setback_levels = static_cast<int>(rng.uniform_int(0, 3));
  s.asymmetry = rng.uniform(0.0, 1.0);
  s.seed = rng.next();
  return s;
}

DatasetManifest gen_dataset(const DatasetCounts& counts, std::size_t resolution, std::uint64_t master_seed,
                            const std::filesystem::path& out_dir) {
  require(counts.train >= 1, ErrorKind::argument, "train count must be at least 1");
  require(counts.test >= 1, ErrorKind::argument, "test count must be at least 1");
  struct Split {
    const char* name;
    std::size_t count;
  };
  const Split splits[] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  DatasetManifest manifest;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Split& split = splits[s];
    if (split.count == 0) continue;
    std::error_code ec;
    std::filesystem::create_directories(out_dir / split.name, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + (out_dir / split.name).string() + ": " + ec.message());
    for (Label label : {Label::human, Label::machine}) {
      for (std::size_t n = 0; n < split.count; ++n) {
        const std::uint64_t seed = derive_seed(master_seed, s, static_cast<std::uint64_t>(label), n);
        VoxelGrid g = label == Label::machine ? gen_machine_form(draw_machine_spec(seed), resolution)
                                              : gen_human_form(draw_human_spec(seed), resolution);
        char name[64];
        std::snprintf(name, sizeof name, "%s/%s_%04zu.vxg", split.name, to_string(label), n);
        write_file_atomic(out_dir / name, write_voxel_file(g));
        manifest.rows.push_back({name, label, split.name});
      }
    }
  }
  write_file_atomic(out_dir / "manifest.tsv", format_manifest(manifest));
  return manifest;
}

}  // namespace archshape
