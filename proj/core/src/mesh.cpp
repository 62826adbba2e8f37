#include "archshape/mesh.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <map>
#include <tuple>

#include "archshape/binary_io.hpp"
#include "archshape/error.hpp"

namespace archshape {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    parse_fail(line, "bad number '" + std::string(tok) + "'");
  return v;
}

long parse_int(std::string_view tok, std::size_t line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    parse_fail(line, "bad index '" + std::string(tok) + "'");
  return v;
}

void push_triangle(TriangleMesh& mesh, Triangle t) {
  if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
    ++mesh.dropped_elements;
    return;
  }
  mesh.triangles.push_back(t);
}

void finish(TriangleMesh& mesh) {
  if (mesh.triangles.empty()) throw Error(ErrorKind::empty_mesh, "mesh has no usable triangles");
  for (const auto& t : mesh.triangles)
    for (auto idx : t)
      if (idx >= mesh.vertices.size())
        throw Error(ErrorKind::index, "vertex index " + std::to_string(idx + 1) + " exceeds vertex count " +
                                          std::to_string(mesh.vertices.size()));
}

TriangleMesh parse_obj(std::string_view text) {
  TriangleMesh mesh;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "v") {
      if (toks.size() < 4 || toks.size() > 5) parse_fail(line_no, "vertex needs 3 coordinates");
      mesh.vertices.push_back(
          {parse_real(toks[1], line_no), parse_real(toks[2], line_no), parse_real(toks[3], line_no)});
    } else if (toks[0] == "f") {
      if (toks.size() < 4) parse_fail(line_no, "face needs at least 3 vertices");
      std::vector<std::uint32_t> corners;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        auto slash = toks[i].find('/');
        long idx = parse_int(toks[i].substr(0, slash), line_no);
        if (idx == 0) parse_fail(line_no, "face index 0 is not valid");
        long resolved = idx > 0 ? idx - 1 : static_cast<long>(mesh.vertices.size()) + idx;
        if (resolved < 0)
          throw Error(ErrorKind::index, "line " + std::to_string(line_no) + ": relative index " +
                                            std::to_string(idx) + " precedes the first vertex");
        corners.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t i = 1; i + 1 < corners.size(); ++i)
        push_triangle(mesh, {corners[0], corners[i], corners[i + 1]});
    } else if (toks[0] == "o" && toks.size() > 1 && mesh.name.empty()) {
      mesh.name = std::string(toks[1]);
    }
    if (eol == text.size()) break;
  }
  finish(mesh);
  return mesh;
}

/// Merges vertices on exact bit equality, preserving first-appearance order.
class VertexPool {
 public:
  explicit VertexPool(TriangleMesh& mesh) : mesh_(mesh) {}

  std::uint32_t add(Vec3 v) {
    auto key = std::make_tuple(std::bit_cast<std::uint64_t>(v.x), std::bit_cast<std::uint64_t>(v.y),
                               std::bit_cast<std::uint64_t>(v.z));
    auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (inserted) mesh_.vertices.push_back(v);
    return it->second;
  }

 private:
  TriangleMesh& mesh_;
  std::map<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>, std::uint32_t> index_;
};

TriangleMesh parse_stl_ascii(std::string_view text) {
  struct Token {
    std::string_view text;
    std::size_t line;
  };
  std::vector<Token> toks;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    ++line_no;
    for (auto t : split_ws(text.substr(pos, eol - pos))) toks.push_back({t, line_no});
    pos = eol + 1;
  }

  TriangleMesh mesh;
  VertexPool pool(mesh);
  std::size_t i = 0;
  auto expect = [&](std::string_view word) {
    if (i >= toks.size()) parse_fail(line_no, "unexpected end of file, expected '" + std::string(word) + "'");
    if (toks[i].text != word)
      parse_fail(toks[i].line, "expected '" + std::string(word) + "', got '" + std::string(toks[i].text) + "'");
    ++i;
  };
  auto real = [&]() {
    if (i >= toks.size()) parse_fail(line_no, "unexpected end of file, expected a number");
    double v = parse_real(toks[i].text, toks[i].line);
    ++i;
    return v;
  };

  expect("solid");
  std::size_t solid_line = toks[i - 1].line;
  while (i < toks.size() && toks[i].line == solid_line) {
    if (!mesh.name.empty()) mesh.name += ' ';
    mesh.name += std::string(toks[i].text);
    ++i;
  }
  while (true) {
    if (i >= toks.size()) parse_fail(line_no, "missing 'endsolid'");
    if (toks[i].text == "endsolid") break;
    expect("facet");
    expect("normal");
    real();
    real();
    real();
    expect("outer");
    expect("loop");
    Triangle tri{};
    for (auto& corner : tri) {
      expect("vertex");
      double x = real();
      double y = real();
      double z = real();
      corner = pool.add({x, y, z});
    }
    expect("endloop");
    expect("endfacet");
    push_triangle(mesh, tri);
  }
  finish(mesh);
  return mesh;
}

TriangleMesh parse_stl_binary(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 84)
    throw Error(ErrorKind::parse, "byte " + std::to_string(bytes.size()) + ": binary STL shorter than 84-byte header");
  ByteReader in(bytes);
  std::string header = in.get_bytes(80);
  std::uint32_t count = in.get_u32();
  std::size_t expected = 84 + std::size_t{50} * count;
  if (bytes.size() != expected)
    throw Error(ErrorKind::parse, "byte 80: facet count " + std::to_string(count) + " implies " +
                                      std::to_string(expected) + " bytes, file has " + std::to_string(bytes.size()));
  TriangleMesh mesh;
  mesh.name = header.substr(0, header.find('\0'));
  VertexPool pool(mesh);
  for (std::uint32_t f = 0; f < count; ++f) {
    for (int n = 0; n < 3; ++n) in.get_f32();
    Triangle tri{};
    for (auto& corner : tri) {
      std::size_t at = in.offset();
      double x = in.get_f32();
      double y = in.get_f32();
      double z = in.get_f32();
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
        throw Error(ErrorKind::parse, "byte " + std::to_string(at) + ": non-finite vertex coordinate");
      corner = pool.add({x, y, z});
    }
    in.get_u8();
    in.get_u8();
    push_triangle(mesh, tri);
  }
  finish(mesh);
  return mesh;
}

}  // namespace

TriangleMesh parse_mesh(std::span<const std::uint8_t> bytes, MeshFormat format) {
  if (bytes.empty()) throw Error(ErrorKind::parse, "byte 0: input is empty");
  std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  switch (format) {
    case MeshFormat::obj: return parse_obj(text);
    case MeshFormat::stl_ascii: return parse_stl_ascii(text);
    case MeshFormat::stl_binary: return parse_stl_binary(bytes);
  }
  throw Error(ErrorKind::argument, "unknown mesh format");
}

TriangleMesh parse_mesh(std::string_view text, MeshFormat format) {
  return parse_mesh(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), format);
}

MeshFormat detect_mesh_format(std::string_view path, std::span<const std::uint8_t> bytes) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string_view::npos ? "" : std::string(path.substr(dot + 1));
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "obj") return MeshFormat::obj;
  if (ext == "stl") {
    if (bytes.size() >= 84) {
      std::uint32_t count = ByteReader(bytes.subspan(80, 4)).get_u32();
      if (bytes.size() == 84 + std::size_t{50} * count) return MeshFormat::stl_binary;
    }
    return MeshFormat::stl_ascii;
  }
  throw Error(ErrorKind::argument, "unsupported mesh extension '." + ext + "' (expected .obj or .stl)");
}

BoundingBox bounding_box(const TriangleMesh& mesh) {
  require(!mesh.vertices.empty(), ErrorKind::empty_mesh, "mesh has no vertices");
  BoundingBox box{mesh.vertices.front(), mesh.vertices.front()};
  for (const auto& v : mesh.vertices)
    for (std::size_t a = 0; a < 3; ++a) {
      box.min[a] = std::min(box.min[a], v[a]);
      box.max[a] = std::max(box.max[a], v[a]);
    }
  return box;
}

std::pair<TriangleMesh, StandardizationReport> standardize(const TriangleMesh& mesh) {
  require(!mesh.triangles.empty(), ErrorKind::empty_mesh, "mesh has no triangles");
  BoundingBox box = bounding_box(mesh);
  double extent = 0.0;
  for (std::size_t a = 0; a < 3; ++a) extent = std::max(extent, box.max[a] - box.min[a]);
  require(extent > 0.0, ErrorKind::degenerate_geometry, "all vertices coincide");

  StandardizationReport report;
  report.applied_scale = 1.0 / extent;
  for (std::size_t a = 0; a < 3; ++a) report.applied_translation[a] = -0.5 * (box.min[a] + box.max[a]);

  TriangleMesh out;
  out.name = mesh.name;
  out.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) out.vertices.push_back((v + report.applied_translation) * report.applied_scale);

  std::size_t dropped = 0;
  for (const auto& t : mesh.triangles) {
    Vec3 n = cross(out.vertices[t[1]] - out.vertices[t[0]], out.vertices[t[2]] - out.vertices[t[0]]);
    if (0.5 * std::sqrt(dot(n, n)) < 1e-12) {
      ++dropped;
      continue;
    }
    out.triangles.push_back(t);
  }
  out.dropped_elements = mesh.dropped_elements + dropped;
  report.dropped_elements = out.dropped_elements;
  require(!out.triangles.empty(), ErrorKind::degenerate_geometry, "every triangle has zero area");
  return {std::move(out), report};
}

}  // namespace archshape
