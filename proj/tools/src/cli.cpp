#include "archshape/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "archshape/binary_io.hpp"
#include "archshape/datagen.hpp"
#include "archshape/error.hpp"
#include "archshape/evaluation.hpp"
#include "archshape/export.hpp"
#include "archshape/manifest.hpp"
#include "archshape/mesh.hpp"
#include "archshape/model.hpp"
#include "archshape/saliency.hpp"
#include "archshape/training.hpp"
#include "archshape/voxelize.hpp"

namespace archshape::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_real(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// ---------------------------------------------------------------- options

struct VoxelizeOptions {
  std::string in;
  std::string out;
  std::size_t resolution = 32;
  std::string fill = "solid";
};

struct GenDataOptions {
  std::string out;
  std::size_t train = 100;
  std::size_t val = 0;
  std::size_t test = 50;
  std::size_t resolution = 32;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::string log;
  std::size_t epochs = 60;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 8;
  bool shuffle = true;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::string model;
  std::string data;
  std::string split = "test";
  std::string out;
  std::string positive = "machine";
  std::string matrix;
};

struct SaliencyOptions {
  std::string model;
  std::string in;
  std::string out = ".";
  std::string mode = "abs";
  std::string target = "true";
  std::string label;
  std::string score = "logit";
  std::vector<std::string> proj;
  std::vector<std::string> slices;
  bool ranks = false;
};

Axis parse_axis(std::string_view s) {
  if (s == "i") return Axis::i;
  if (s == "j") return Axis::j;
  if (s == "k") return Axis::k;
  throw Error(ErrorKind::argument, "axis must be i, j or k, got '" + std::string(s) + "'");
}

const char* axis_name(Axis a) { return a == Axis::i ? "i" : a == Axis::j ? "j" : "k"; }

Model read_model(const std::string& path) { return load_checkpoint(read_file(path)); }

// ---------------------------------------------------------------- commands

int cmd_voxelize(const VoxelizeOptions& o, std::ostream& out) {
  require(o.resolution >= 2, ErrorKind::argument, "--res must be at least 2");
  const Bytes bytes = read_file(o.in);
  const MeshFormat format = detect_mesh_format(o.in, bytes);
  const auto [mesh, report] = standardize(parse_mesh(bytes, format));
  const VoxelGrid grid = voxelize(mesh, o.resolution, o.fill == "solid" ? FillMode::solid : FillMode::surface);
  write_file_atomic(o.out, write_voxel_file(grid));
  const GridDims& d = grid.dims();
  out << "dims " << d.d << "x" << d.h << "x" << d.w << "\n";
  out << "occupancy " << format_real("%.6f", grid.occupied_fraction()) << "\n";
  if (report.dropped_elements + mesh.dropped_elements > 0)
    out << "dropped " << report.dropped_elements + mesh.dropped_elements << " degenerate triangles\n";
  return 0;
}

int cmd_gen_data(const GenDataOptions& o, std::ostream& out) {
  require(o.train >= 1, ErrorKind::argument, "--train must be at least 1");
  require(o.test >= 1, ErrorKind::argument, "--test must be at least 1");
  const DatasetManifest manifest = gen_dataset({o.train, o.val, o.test}, o.resolution, o.seed, o.out);
  out << "manifest " << (fs::path(o.out) / "manifest.tsv").string() << "\n";
  for (const char* split : {"train", "val", "test"}) {
    std::size_t human = 0, machine = 0;
    for (const auto& row : manifest.split(split)) (row.label == Label::human ? human : machine) += 1;
    if (human + machine == 0) continue;
    out << split << ": human " << human << ", machine " << machine << "\n";
  }
  return 0;
}

std::size_t dataset_resolution(const Dataset& data, const std::string& what) {
  require(!data.empty(), ErrorKind::argument, what + " split is empty");
  const GridDims d = data.front().grid.dims();
  for (const auto& ex : data) {
    const GridDims& e = ex.grid.dims();
    require(e.d == e.h && e.h == e.w, ErrorKind::shape, what + " grids must be cubic");
    require(e == d, ErrorKind::shape, what + " grids have mixed resolutions");
  }
  return d.d;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;
  cfg.shuffle = o.shuffle;
  validate(cfg);

  const fs::path manifest_path(o.data);
  const DatasetManifest manifest = parse_manifest(as_text(read_file(manifest_path)));
  const fs::path base = manifest_path.parent_path();
  auto val_rows = manifest.split("val");
  const std::string val_name = val_rows.empty() ? "test" : "val";
  if (val_rows.empty()) val_rows = manifest.split("test");
  const Dataset train_set = load_examples(manifest.split("train"), base);
  const Dataset val_set = load_examples(val_rows, base);

  ArchConfig arch;
  arch.resolution = dataset_resolution(train_set, "train");
  require(dataset_resolution(val_set, val_name) == arch.resolution, ErrorKind::shape,
          val_name + " resolution differs from train resolution");
  validate(arch);

  out << "train " << train_set.size() << " samples, " << val_name << " " << val_set.size() << " samples, resolution "
      << arch.resolution << "\n";
  const TrainResult result = train(build_model(arch, o.seed), train_set, val_set, cfg, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " train_loss " << format_real("%.6f", r.train_loss) << " train_acc "
        << format_real("%.4f", r.train_accuracy) << " val_loss " << format_real("%.6f", r.val_loss) << " val_acc "
        << format_real("%.4f", r.val_accuracy) << "\n";
    out.flush();
  });

  const fs::path log = o.log.empty() ? fs::path(o.out).replace_extension(".csv") : fs::path(o.log);
  write_file_atomic(o.out, save_checkpoint(result.model));
  write_file_atomic(log, training_log_csv(result.records));
  out << "checkpoint " << o.out << "\nlog " << log.string() << "\n";
  return 0;
}

std::vector<std::uint64_t> parse_cells(const std::string& text) {
  std::vector<std::uint64_t> cells;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const std::string t = trim(part);
    require(!t.empty() && t.find_first_not_of("0123456789") == std::string::npos, ErrorKind::argument,
            "--matrix expects four non-negative integers hh,hm,mh,mm");
    cells.push_back(std::stoull(t));
  }
  require(cells.size() == 4, ErrorKind::argument, "--matrix expects four non-negative integers hh,hm,mh,mm");
  return cells;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const Label positive = parse_label(o.positive);
  EvaluationResult result;
  if (!o.matrix.empty()) {
    const auto c = parse_cells(o.matrix);
    result.matrix = confusion_from_cells(c[0], c[1], c[2], c[3]);
    result.report = metrics(result.matrix, positive);
  } else {
    require(!o.model.empty() && !o.data.empty(), ErrorKind::argument, "eval needs --model and --data, or --matrix");
    const Model model = read_model(o.model);
    const fs::path manifest_path(o.data);
    const DatasetManifest manifest = parse_manifest(as_text(read_file(manifest_path)));
    const auto rows = manifest.split(o.split);
    require(!rows.empty(), ErrorKind::argument, "split '" + o.split + "' has no rows");
    result = evaluate(model, rows, manifest_path.parent_path(), positive);
  }
  if (!o.out.empty()) write_file_atomic(o.out, format_report_csv(result));
  out << format_summary(result.matrix, result.report);
  return 0;
}

struct PendingFile {
  fs::path path;
  Bytes bytes;
};

void add_text(std::vector<PendingFile>& files, fs::path path, const std::string& text) {
  files.push_back({std::move(path), Bytes(text.begin(), text.end())});
}

int cmd_saliency(const SaliencyOptions& o, std::ostream& out) {
  const ImportanceMode mode = o.mode == "square" ? ImportanceMode::square : ImportanceMode::abs;
  const TargetSource source = o.target == "true" ? TargetSource::true_label : TargetSource::predicted;
  const ScoreKind score = o.score == "prob" ? ScoreKind::probability : ScoreKind::logit;
  require(source == TargetSource::predicted || !o.label.empty(), ErrorKind::argument,
          "--target true requires --label h|m");
  const std::size_t true_label = o.label.empty() ? 0 : static_cast<std::size_t>(parse_label(o.label));

  std::vector<Axis> projections;
  for (const auto& p : o.proj) projections.push_back(parse_axis(p));
  std::vector<std::pair<Axis, std::size_t>> slices;
  for (const auto& s : o.slices) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorKind::argument, "--slice expects axis=index, got '" + s + "'");
    const std::string idx = trim(s.substr(eq + 1));
    require(!idx.empty() && idx.find_first_not_of("0123456789") == std::string::npos, ErrorKind::argument,
            "--slice index must be a non-negative integer, got '" + s + "'");
    slices.emplace_back(parse_axis(trim(s.substr(0, eq))), std::stoull(idx));
  }

  const Model model = read_model(o.model);
  const VoxelGrid grid = read_voxel_file(read_file(o.in));
  require(grid.kind() == ValueKind::occupancy, ErrorKind::argument, "saliency input must be an occupancy grid");
  for (const auto& [axis, idx] : slices) {
    const std::size_t extent = std::array{grid.dims().d, grid.dims().h, grid.dims().w}[static_cast<int>(axis)];
    require(idx < extent, ErrorKind::index,
            std::string("slice ") + axis_name(axis) + "=" + std::to_string(idx) + " outside extent " +
                std::to_string(extent));
  }

  const SaliencyResult sal = compute_saliency(model, grid, mode, source, true_label, score);
  const fs::path dir(o.out);
  const std::string stem = fs::path(o.in).stem().string();
  std::vector<PendingFile> files;
  files.push_back({dir / (stem + "_saliency.vxg"), write_voxel_file(scalar_grid_from(sal.normalized))});
  for (Axis a : projections) {
    const Projection2D p = project(sal.normalized, a);
    const std::string base = stem + "_proj_" + axis_name(a);
    add_text(files, dir / (base + ".pgm"), format_pgm(p.values));
    add_text(files, dir / (base + ".csv"), format_matrix_csv(p.values));
  }
  for (const auto& [axis, idx] : slices) {
    const Matrix m = slice(sal.normalized, axis, idx);
    const std::string base = stem + "_slice_" + axis_name(axis) + std::to_string(idx);
    add_text(files, dir / (base + ".pgm"), format_pgm(m));
    add_text(files, dir / (base + ".csv"), format_matrix_csv(m));
  }
  if (o.ranks) files.push_back({dir / (stem + "_ranks.vxg"), write_voxel_file(band_grid(rank_bands(sal.normalized, grid)))});

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  for (const auto& f : files) write_file_atomic(f.path, f.bytes);

  out << "target " << to_string(static_cast<Label>(sal.target_class)) << " ("
      << (source == TargetSource::predicted ? "predicted" : "true label") << ")\n";
  for (const auto& f : files) out << "wrote " << f.path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- config merge

bool given_on_command_line(std::span<const std::string> args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::optional<std::string> config_path(std::span<const std::string> args) {
  for (std::size_t n = 0; n < args.size(); ++n) {
    if (args[n] == "--config") {
      require(n + 1 < args.size(), ErrorKind::argument, "--config needs a path");
      return args[n + 1];
    }
    if (args[n].rfind("--config=", 0) == 0) return args[n].substr(9);
  }
  return std::nullopt;
}

/// Appends `--key=value` for every file entry not already given as a flag.
std::vector<std::string> merge_config(const CLI::App& sub, std::span<const std::string> args) {
  std::vector<std::string> merged(args.begin(), args.end());
  const auto path = config_path(args.subspan(1));
  if (!path) return merged;
  const Bytes bytes = read_file(*path);
  const auto entries = parse_config(as_text(bytes));
  std::map<std::string, std::vector<std::string>> values;
  for (const auto& [key, value] : entries) {
    const CLI::Option* opt = nullptr;
    for (const CLI::Option* candidate : sub.get_options())
      for (const auto& name : candidate->get_lnames())
        if (name == key) opt = candidate;
    require(opt != nullptr && key != "config" && key != "help", ErrorKind::config,
            "unknown key '" + key + "' in " + *path + " for " + sub.get_name());
    values[key].push_back(value);
  }
  for (const auto& [key, list] : values) {
    if (given_on_command_line(args, "--" + key)) continue;
    for (const auto& v : list) merged.push_back("--" + key + "=" + v);
  }
  return merged;
}

int report(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  return e.kind() == ErrorKind::io ? 2 : 1;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            "line " + std::to_string(line_no) + ": expected key=value, got '" + body + "'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    require(!key.empty(), ErrorKind::config, "line " + std::to_string(line_no) + ": empty key");
    entries.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return entries;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voxel massing classifier: data generation, training, evaluation and saliency", "archshape"};
  app.require_subcommand(1, 1);
  std::string config_unused;

  VoxelizeOptions vox;
  auto* vox_cmd = app.add_subcommand("voxelize", "Voxelize an OBJ or STL mesh into a VXG1 grid");
  vox_cmd->add_option("--in", vox.in, "Input mesh (.obj, .stl)")->required();
  vox_cmd->add_option("--out", vox.out, "Output VXG1 path")->required();
  vox_cmd->add_option("--res", vox.resolution, "Grid resolution along the longest axis")->capture_default_str();
  vox_cmd->add_option("--fill", vox.fill, "surface or solid")
      ->check(CLI::IsMember({"surface", "solid"}))
      ->capture_default_str();

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a labelled synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train", gen.train, "Training samples per class")->capture_default_str();
  gen_cmd->add_option("--val", gen.val, "Validation samples per class")->capture_default_str();
  gen_cmd->add_option("--test", gen.test, "Test samples per class")->capture_default_str();
  gen_cmd->add_option("--res", gen.resolution, "Grid resolution")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->required();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on a dataset manifest");
  train_cmd->add_option("--data", tr.data, "Dataset manifest (manifest.tsv)")->required();
  train_cmd->add_option("--out", tr.out, "Output ASN1 checkpoint")->required();
  train_cmd->add_option("--log", tr.log, "Training log CSV (default: checkpoint path with .csv)");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tr.momentum, "Momentum")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--shuffle", tr.shuffle, "Shuffle each epoch (true/false)")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Seed for weights and shuffling")->required();

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint, or report metrics for fixed counts");
  eval_cmd->add_option("--model", ev.model, "ASN1 checkpoint");
  eval_cmd->add_option("--data", ev.data, "Dataset manifest");
  eval_cmd->add_option("--split", ev.split, "Manifest split to evaluate")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Report CSV path");
  eval_cmd->add_option("--positive", ev.positive, "Positive class for precision/recall")
      ->check(CLI::IsMember({"human", "machine", "h", "m"}))
      ->capture_default_str();
  eval_cmd->add_option("--matrix", ev.matrix, "Confusion cells hh,hm,mh,mm (true,predicted) instead of a model");

  SaliencyOptions sal;
  auto* sal_cmd = app.add_subcommand("saliency", "Input-gradient saliency for one grid");
  sal_cmd->add_option("--model", sal.model, "ASN1 checkpoint")->required();
  sal_cmd->add_option("--in", sal.in, "Input VXG1 occupancy grid")->required();
  sal_cmd->add_option("--out", sal.out, "Output directory")->capture_default_str();
  sal_cmd->add_option("--mode", sal.mode, "abs or square")->check(CLI::IsMember({"abs", "square"}))->capture_default_str();
  sal_cmd->add_option("--target", sal.target, "true or pred")->check(CLI::IsMember({"true", "pred"}))->capture_default_str();
  sal_cmd->add_option("--label", sal.label, "True label (h or m), needed with --target true")
      ->check(CLI::IsMember({"h", "m", "human", "machine"}));
  sal_cmd->add_option("--score", sal.score, "logit or prob")->check(CLI::IsMember({"logit", "prob"}))->capture_default_str();
  sal_cmd->add_option("--proj", sal.proj, "Max projection along axis i, j or k (repeatable)");
  sal_cmd->add_option("--slice", sal.slices, "Slice axis=index (repeatable)");
  sal_cmd->add_flag("--ranks", sal.ranks, "Write decile rank bands");

  for (CLI::App* sub : {vox_cmd, gen_cmd, train_cmd, eval_cmd, sal_cmd})
    sub->add_option("--config", config_unused, "key=value file; flags override its entries");

  try {
    std::vector<std::string> argv(args.begin(), args.end());
    if (!argv.empty() && argv.front().rfind("-", 0) != 0) {
      if (const CLI::App* sub = app.get_subcommand_no_throw(argv.front())) argv = merge_config(*sub, argv);
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(std::move(argv));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    return report(e, err);
  }

  try {
    if (vox_cmd->parsed()) return cmd_voxelize(vox, out);
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (sal_cmd->parsed()) return cmd_saliency(sal, out);
  } catch (const Error& e) {
    return report(e, err);
  } catch (const fs::filesystem_error& e) {
    err << "error: I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace archshape::cli
