#include "archshape/voxel_grid.hpp"

#include <algorithm>
#include <cmath>

#include "archshape/error.hpp"

namespace archshape {
namespace {

void check_dims(const GridDims& dims) {
  require(dims.d > 0 && dims.h > 0 && dims.w > 0, ErrorKind::shape, "grid dims must be positive");
}

void check_occupancy(std::span<const float> data) {
  for (float v : data)
    require(v == 0.0f || v == 1.0f, ErrorKind::format, "occupancy grid holds a value other than 0 or 1");
}

}  // namespace

VoxelGrid::VoxelGrid(GridDims dims, ValueKind kind) : dims_(dims), kind_(kind) {
  check_dims(dims_);
  data_.assign(dims_.count(), 0.0f);
  voxel_size_ = 1.0 / static_cast<double>(std::max({dims_.d, dims_.h, dims_.w}));
}

VoxelGrid::VoxelGrid(GridDims dims, ValueKind kind, std::vector<float> data) : VoxelGrid(dims, kind) {
  require(data.size() == dims_.count(), ErrorKind::shape, "grid data length does not match dims");
  if (kind_ == ValueKind::occupancy) check_occupancy(data);
  data_ = std::move(data);
}

void VoxelGrid::set_placement(Vec3 origin, double voxel_size) {
  require(voxel_size > 0.0, ErrorKind::argument, "voxel size must be positive");
  origin_ = origin;
  voxel_size_ = voxel_size;
}

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](float v) { return v != 0.0f; }));
}

Tensor VoxelGrid::to_tensor() const {
  Tensor t({1, 1, dims_.d, dims_.h, dims_.w});
  std::copy(data_.begin(), data_.end(), t.data());
  return t;
}

VoxelGrid scalar_grid_from(const Tensor& field) {
  require(field.rank() == 3, ErrorKind::shape, "expected a rank-3 field, got " + shape_string(field.shape()));
  VoxelGrid g({field.dim(0), field.dim(1), field.dim(2)}, ValueKind::scalar);
  for (std::size_t i = 0; i < field.size(); ++i) g[i] = static_cast<float>(field[i]);
  return g;
}

Bytes write_voxel_file(const VoxelGrid& grid) {
  require(grid.size() > 0, ErrorKind::argument, "cannot write an empty grid");
  ByteWriter out;
  out.put_bytes("VXG1");
  out.put_u32(static_cast<std::uint32_t>(grid.dims().d));
  out.put_u32(static_cast<std::uint32_t>(grid.dims().h));
  out.put_u32(static_cast<std::uint32_t>(grid.dims().w));
  out.put_u8(static_cast<std::uint8_t>(grid.kind()));
  if (grid.kind() == ValueKind::occupancy) {
    for (float v : grid.values()) out.put_u8(v != 0.0f ? 1 : 0);
  } else {
    for (float v : grid.values()) out.put_f32(v);
  }
  return out.take();
}

VoxelGrid read_voxel_file(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 17 || in.get_bytes(4) != "VXG1") throw Error(ErrorKind::format, "bad VXG1 magic");
  GridDims dims{in.get_u32(), in.get_u32(), in.get_u32()};
  require(dims.count() > 0, ErrorKind::format, "zero grid dimension");
  std::uint8_t kind = in.get_u8();
  require(kind <= 1, ErrorKind::format, "unknown value-kind code " + std::to_string(kind));
  std::size_t width = kind == 0 ? 1 : 4;
  std::size_t expected = dims.count() * width;
  require(in.remaining() == expected, ErrorKind::format,
          "dims " + std::to_string(dims.d) + "x" + std::to_string(dims.h) + "x" + std::to_string(dims.w) +
              " need a " + std::to_string(expected) + "-byte payload, found " + std::to_string(in.remaining()));
  std::vector<float> data(dims.count());
  if (kind == 0) {
    for (auto& v : data) {
      std::uint8_t b = in.get_u8();
      require(b <= 1, ErrorKind::format, "occupancy byte " + std::to_string(b) + " at offset " +
                                             std::to_string(in.offset() - 1) + " is not 0 or 1");
      v = static_cast<float>(b);
    }
  } else {
    for (auto& v : data) v = in.get_f32();
  }
  return VoxelGrid(dims, static_cast<ValueKind>(kind), std::move(data));
}

}  // namespace archshape
