#include "archshape/voxelize.hpp"

#include <algorithm>
#include <cmath>

#include "archshape/error.hpp"

namespace archshape {
namespace {

constexpr double kDomainLo = -0.5;

bool separated_on(const Vec3& axis, const Vec3& v0, const Vec3& v1, const Vec3& v2, const Vec3& h) {
  double p0 = dot(axis, v0);
  double p1 = dot(axis, v1);
  double p2 = dot(axis, v2);
  double r = h.x * std::abs(axis.x) + h.y * std::abs(axis.y) + h.z * std::abs(axis.z);
  return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
}

struct Point2 {
  double u;
  double v;
};

bool lex_less(Point2 a, Point2 b) { return a.u < b.u || (a.u == b.u && a.v < b.v); }

double orient(Point2 a, Point2 b, Point2 q) { return (b.u - a.u) * (q.v - a.v) - (b.v - a.v) * (q.u - a.u); }

// Evaluated from the lexicographically smaller endpoint so the two triangles
// sharing an edge see exactly negated values.
double edge_fn(Point2 a, Point2 b, Point2 q) { return lex_less(a, b) ? orient(a, b, q) : -orient(b, a, q); }

/// Crossing parity of voxel centers along +axis; 1 = odd (inside).
std::vector<std::uint8_t> parity_along(const TriangleMesh& mesh, std::size_t res, std::size_t axis) {
  const std::size_t au = (axis + 1) % 3;
  const std::size_t av = (axis + 2) % 3;
  const double h = 1.0 / static_cast<double>(res);
  auto center = [&](std::size_t idx) { return kDomainLo + (static_cast<double>(idx) + 0.5) * h; };

  std::vector<std::vector<double>> columns(res * res);
  for (const auto& tri : mesh.triangles) {
    const Vec3* p[3] = {&mesh.vertices[tri[0]], &mesh.vertices[tri[1]], &mesh.vertices[tri[2]]};
    Point2 q2[3];
    for (int n = 0; n < 3; ++n) q2[n] = {(*p[n])[au], (*p[n])[av]};
    double area = edge_fn(q2[0], q2[1], q2[2]);
    if (area == 0.0) continue;
    const bool ccw = area > 0.0;
    const double sign = ccw ? 1.0 : -1.0;

    double umin = std::min({q2[0].u, q2[1].u, q2[2].u});
    double umax = std::max({q2[0].u, q2[1].u, q2[2].u});
    double vmin = std::min({q2[0].v, q2[1].v, q2[2].v});
    double vmax = std::max({q2[0].v, q2[1].v, q2[2].v});
    auto lo_index = [&](double x) {
      double f = std::ceil((x - kDomainLo) / h - 0.5) - 1.0;
      return static_cast<long>(std::clamp(f, 0.0, static_cast<double>(res)));
    };
    auto hi_index = [&](double x) {
      double f = std::floor((x - kDomainLo) / h - 0.5) + 1.0;
      return static_cast<long>(std::clamp(f, -1.0, static_cast<double>(res) - 1.0));
    };
    for (long cu = lo_index(umin); cu <= hi_index(umax); ++cu) {
      for (long cv = lo_index(vmin); cv <= hi_index(vmax); ++cv) {
        Point2 q{center(static_cast<std::size_t>(cu)), center(static_cast<std::size_t>(cv))};
        double w[3];
        bool inside = true;
        for (int n = 0; n < 3 && inside; ++n) {
          Point2 a = q2[(n + 1) % 3];
          Point2 b = q2[(n + 2) % 3];
          w[n] = sign * edge_fn(a, b, q);
          if (w[n] < 0.0) inside = false;
          // On-edge points belong to the triangle lying left of the
          // canonically directed edge, so shared edges count once.
          else if (w[n] == 0.0 && lex_less(a, b) != ccw) inside = false;
        }
        if (!inside) continue;
        double sum = w[0] + w[1] + w[2];
        double t = (w[0] * (*p[0])[axis] + w[1] * (*p[1])[axis] + w[2] * (*p[2])[axis]) / sum;
        columns[static_cast<std::size_t>(cu) * res + static_cast<std::size_t>(cv)].push_back(t);
      }
    }
  }

  const GridDims dims{res, res, res};
  std::vector<std::uint8_t> parity(dims.count(), 0);
  for (std::size_t cu = 0; cu < res; ++cu) {
    for (std::size_t cv = 0; cv < res; ++cv) {
      auto& hits = columns[cu * res + cv];
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());
      for (std::size_t ca = 0; ca < res; ++ca) {
        double c = center(ca);
        auto beyond = hits.end() - std::upper_bound(hits.begin(), hits.end(), c);
        std::size_t idx3[3];
        idx3[axis] = ca;
        idx3[au] = cu;
        idx3[av] = cv;
        parity[dims.index(idx3[0], idx3[1], idx3[2])] = static_cast<std::uint8_t>(beyond & 1);
      }
    }
  }
  return parity;
}

void mark_surface(const TriangleMesh& mesh, std::size_t res, VoxelGrid& grid) {
  const double h = 1.0 / static_cast<double>(res);
  // Shrinking each cell's lower face by a hair makes cells own only their upper face.
  const double shrink = 1e-9 * h;
  auto index_range = [&](double lo, double hi) {
    long a = static_cast<long>(std::floor((lo - kDomainLo) / h)) - 1;
    long b = static_cast<long>(std::floor((hi - kDomainLo) / h)) + 1;
    return std::pair{std::clamp(a, 0L, static_cast<long>(res) - 1), std::clamp(b, 0L, static_cast<long>(res) - 1)};
  };
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    std::pair<long, long> range[3];
    for (std::size_t ax = 0; ax < 3; ++ax)
      range[ax] = index_range(std::min({a[ax], b[ax], c[ax]}), std::max({a[ax], b[ax], c[ax]}));
    for (long i = range[0].first; i <= range[0].second; ++i)
      for (long j = range[1].first; j <= range[1].second; ++j)
        for (long k = range[2].first; k <= range[2].second; ++k) {
          long idx[3] = {i, j, k};
          Vec3 lo, hi;
          for (std::size_t ax = 0; ax < 3; ++ax) {
            lo[ax] = kDomainLo + static_cast<double>(idx[ax]) * h + (idx[ax] > 0 ? shrink : 0.0);
            hi[ax] = kDomainLo + static_cast<double>(idx[ax] + 1) * h;
          }
          Vec3 center = (lo + hi) * 0.5;
          Vec3 half = (hi - lo) * 0.5;
          if (triangle_box_overlap(center, half, a, b, c))
            grid(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) = 1.0f;
        }
  }
}

}  // namespace

bool triangle_box_overlap(const Vec3& box_center, const Vec3& h, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 v0 = a - box_center;
  const Vec3 v1 = b - box_center;
  const Vec3 v2 = c - box_center;
  const Vec3 basis[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const auto& e : basis)
    if (separated_on(e, v0, v1, v2, h)) return false;
  const Vec3 edges[3] = {v1 - v0, v2 - v1, v0 - v2};
  if (separated_on(cross(edges[0], edges[1]), v0, v1, v2, h)) return false;
  for (const auto& e : basis)
    for (const auto& f : edges)
      if (separated_on(cross(e, f), v0, v1, v2, h)) return false;
  return true;
}

double parity_disagreement(const TriangleMesh& mesh, std::size_t resolution) {
  require(resolution >= 2, ErrorKind::argument, "resolution must be at least 2");
  auto px = parity_along(mesh, resolution, 0);
  auto py = parity_along(mesh, resolution, 1);
  auto pz = parity_along(mesh, resolution, 2);
  std::size_t bad = 0;
  for (std::size_t n = 0; n < px.size(); ++n)
    if (px[n] != py[n] || py[n] != pz[n]) ++bad;
  return static_cast<double>(bad) / static_cast<double>(px.size());
}

VoxelGrid voxelize(const TriangleMesh& mesh, std::size_t resolution, FillMode fill) {
  require(resolution >= 2, ErrorKind::argument, "resolution must be at least 2, got " + std::to_string(resolution));
  require(!mesh.triangles.empty(), ErrorKind::empty_mesh, "mesh has no triangles");
  VoxelGrid grid = VoxelGrid::cube(resolution, ValueKind::occupancy);
  grid.set_placement({kDomainLo, kDomainLo, kDomainLo}, 1.0 / static_cast<double>(resolution));
  mark_surface(mesh, resolution, grid);
  if (fill == FillMode::surface) return grid;

  auto px = parity_along(mesh, resolution, 0);
  auto py = parity_along(mesh, resolution, 1);
  auto pz = parity_along(mesh, resolution, 2);
  std::size_t bad = 0;
  for (std::size_t n = 0; n < px.size(); ++n) {
    if (px[n] != py[n] || py[n] != pz[n]) ++bad;
    if (px[n] + py[n] + pz[n] >= 2) grid[n] = 1.0f;
  }
  double fraction = static_cast<double>(bad) / static_cast<double>(px.size());
  if (fraction > 0.005)
    throw Error(ErrorKind::watertight, "ray parity disagrees on " + std::to_string(bad) + " of " +
                                           std::to_string(px.size()) + " voxels");
  return grid;
}

}  // namespace archshape
