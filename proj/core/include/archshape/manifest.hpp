#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "archshape/training.hpp"

namespace archshape {

enum class Label : std::uint8_t { human = 0, machine = 1 };

const char* to_string(Label label);
/// Accepts "human"/"h"/"0" and "machine"/"m"/"1".
Label parse_label(std::string_view text);

struct ManifestRow {
  std::string path;  // relative to the manifest's directory unless absolute
  Label label = Label::human;
  std::string split;
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> split(std::string_view name) const;
};

/// `path<TAB>label<TAB>split` per line, LF endings.
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);

/// Reads every row's grid (relative paths resolve against `base_dir`).
Dataset load_examples(std::span<const ManifestRow> rows, const std::filesystem::path& base_dir);

}  // namespace archshape
