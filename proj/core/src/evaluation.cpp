#include "archshape/evaluation.hpp"

#include <cstdio>

#include "archshape/error.hpp"
#include "archshape/voxel_grid.hpp"

namespace archshape {

std::uint64_t ConfusionMatrix::total() const {
  return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

ConfusionMatrix confusion(std::span<const Label> labels, std::span<const Label> predictions) {
  require(labels.size() == predictions.size(), ErrorKind::argument,
          "labels (" + std::to_string(labels.size()) + ") and predictions (" + std::to_string(predictions.size()) +
              ") differ in length");
  require(!labels.empty(), ErrorKind::argument, "no labels given");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i)
    ++cm.counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  return cm;
}

ConfusionMatrix confusion_from_cells(std::uint64_t hh, std::uint64_t hm, std::uint64_t mh, std::uint64_t mm) {
  ConfusionMatrix cm;
  cm.counts = {{{hh, hm}, {mh, mm}}};
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm, Label positive) {
  const Label negative = positive == Label::machine ? Label::human : Label::machine;
  const std::uint64_t tp = cm.at(positive, positive);
  const std::uint64_t fn = cm.at(positive, negative);
  const std::uint64_t fp = cm.at(negative, positive);
  const std::uint64_t tn = cm.at(negative, negative);
  const std::uint64_t total = cm.total();
  require(total > 0, ErrorKind::undefined_metric, "accuracy: matrix is empty");
  require(tp + fp > 0, ErrorKind::undefined_metric, "precision: no positive predictions");
  require(tp + fn > 0, ErrorKind::undefined_metric, "recall: no positive labels");
  MetricsReport r;
  r.positive_class = positive;
  r.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return r;
}

EvaluationResult evaluate(const Model& model, std::span<const ManifestRow> rows, const std::filesystem::path& base_dir,
                          Label positive) {
  require(!rows.empty(), ErrorKind::argument, "nothing to evaluate");
  EvaluationResult res;
  std::vector<Label> labels, preds;
  for (const auto& row : rows) {
    std::filesystem::path p = row.path;
    if (p.is_relative()) p = base_dir / p;
    VoxelGrid grid = read_voxel_file(read_file(p));
    const std::size_t R = model.config.resolution;
    require(grid.dims() == GridDims{R, R, R}, ErrorKind::shape,
            row.path + ": grid resolution " + std::to_string(grid.dims().d) + " does not match model resolution " +
                std::to_string(R));
    auto fwd = forward(model, grid.to_tensor());
    const std::size_t cls = argmax_rows(fwd.probs)[0];
    require(cls <= 1, ErrorKind::argument, "binary evaluation needs a 2-class model");
    ItemResult item{row.path, row.label, static_cast<Label>(cls), fwd.probs[0], fwd.probs[1]};
    labels.push_back(item.truth);
    preds.push_back(item.predicted);
    res.items.push_back(std::move(item));
  }
  res.matrix = confusion(labels, preds);
  res.report = metrics(res.matrix, positive);
  return res;
}

std::string format_report_csv(const EvaluationResult& result) {
  std::string out = "path,true_label,pred_label,p_human,p_machine\n";
  char buf[512];
  for (const auto& it : result.items) {
    std::snprintf(buf, sizeof buf, ",%s,%s,%.9g,%.9g\n", to_string(it.truth), to_string(it.predicted), it.p_human,
                  it.p_machine);
    out += it.path + buf;
  }
  const auto& c = result.matrix.counts;
  std::snprintf(buf, sizeof buf,
                "#matrix,human_human,human_machine,machine_human,machine_machine\n"
                "#matrix,%llu,%llu,%llu,%llu\n"
                "#metrics,positive,accuracy,precision,recall\n"
                "#metrics,%s,%.9g,%.9g,%.9g\n",
                static_cast<unsigned long long>(c[0][0]), static_cast<unsigned long long>(c[0][1]),
                static_cast<unsigned long long>(c[1][0]), static_cast<unsigned long long>(c[1][1]),
                to_string(result.report.positive_class), result.report.accuracy, result.report.precision,
                result.report.recall);
  return out + buf;
}

std::string format_summary(const ConfusionMatrix& cm, const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "confusion (true \\ predicted)   human  machine\n"
                "  human                     %7llu  %7llu\n"
                "  machine                   %7llu  %7llu\n"
                "positive class: %s\n"
                "accuracy:  %.5f\n"
                "precision: %.5f\n"
                "recall:    %.5f\n",
                static_cast<unsigned long long>(cm.counts[0][0]), static_cast<unsigned long long>(cm.counts[0][1]),
                static_cast<unsigned long long>(cm.counts[1][0]), static_cast<unsigned long long>(cm.counts[1][1]),
                to_string(r.positive_class), r.accuracy, r.precision, r.recall);
  return buf;
}

}  // namespace archshape
