#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "archshape/manifest.hpp"
#include "archshape/model.hpp"

namespace archshape {

/// counts[true][predicted].
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  std::uint64_t at(Label truth, Label predicted) const {
    return counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  }
  std::uint64_t total() const;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(std::span<const Label> labels, std::span<const Label> predictions);

/// Builds a matrix from the four cells in (hh, hm, mh, mm) order.
ConfusionMatrix confusion_from_cells(std::uint64_t hh, std::uint64_t hm, std::uint64_t mh, std::uint64_t mm);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  Label positive_class = Label::machine;
};

/// accuracy = correct / total, precision = TP / (TP + FP), recall = TP / (TP + FN).
/// A zero denominator throws an undefined-metric error naming the metric.
MetricsReport metrics(const ConfusionMatrix& cm, Label positive = Label::machine);

struct ItemResult {
  std::string path;
  Label truth = Label::human;
  Label predicted = Label::human;
  double p_human = 0.0;
  double p_machine = 0.0;
};

struct EvaluationResult {
  ConfusionMatrix matrix;
  MetricsReport report;
  std::vector<ItemResult> items;
};

/// Infer-mode argmax prediction for each row; grids are read from
/// `base_dir / row.path`.
EvaluationResult evaluate(const Model& model, std::span<const ManifestRow> rows,
                          const std::filesystem::path& base_dir, Label positive = Label::machine);

/// Per-item rows `path,true_label,pred_label,p_human,p_machine`, then a
/// `#`-prefixed footer with the matrix cells and metrics.
std::string format_report_csv(const EvaluationResult& result);

/// Human-readable matrix and metric summary.
std::string format_summary(const ConfusionMatrix& cm, const MetricsReport& report);

}  // namespace archshape
