#include "archshape/manifest.hpp"

#include <set>

#include "archshape/binary_io.hpp"
#include "archshape/error.hpp"

namespace archshape {

const char* to_string(Label label) { return label == Label::human ? "human" : "machine"; }

Label parse_label(std::string_view text) {
  if (text == "human" || text == "h" || text == "0") return Label::human;
  if (text == "machine" || text == "m" || text == "1") return Label::machine;
  throw Error(ErrorKind::argument, "unknown label '" + std::string(text) + "'");
}

std::vector<ManifestRow> DatasetManifest::split(std::string_view name) const {
  std::vector<ManifestRow> out;
  for (const auto& r : rows)
    if (r.split == name) out.push_back(r);
  return out;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.rows) out += r.path + "\t" + to_string(r.label) + "\t" + r.split + "\n";
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos)
      throw Error(ErrorKind::parse, "manifest line " + std::to_string(line_no) + ": expected path<TAB>label<TAB>split");
    ManifestRow row{std::string(line.substr(0, t1)), parse_label(line.substr(t1 + 1, t2 - t1 - 1)),
                    std::string(line.substr(t2 + 1))};
    require(seen.insert(row.path).second, ErrorKind::parse,
            "manifest line " + std::to_string(line_no) + ": duplicate path " + row.path);
    m.rows.push_back(std::move(row));
  }
  return m;
}

Dataset load_examples(std::span<const ManifestRow> rows, const std::filesystem::path& base_dir) {
  Dataset out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    std::filesystem::path p = row.path;
    if (p.is_relative()) p = base_dir / p;
    out.push_back({read_voxel_file(read_file(p)), static_cast<std::size_t>(row.label)});
  }
  return out;
}

}  // namespace archshape
