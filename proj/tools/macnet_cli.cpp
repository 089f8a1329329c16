// Operator surface for the food-places classifier: synthetic data
// generation, event-aware splitting, training, evaluation, and SVG
// report rendering.
//
// Exit codes: 0 success, 1 usage error, 2 input error, 3 numeric fault.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "macnet/checkpoint.hpp"
#include "macnet/error.hpp"
#include "macnet/manifest.hpp"
#include "macnet/metrics.hpp"
#include "macnet/model.hpp"
#include "macnet/svg_report.hpp"
#include "macnet/synth.hpp"
#include "macnet/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct SynthOptions {
  std::string out;
  int classes = 4;
  int events_per_class = 7;
  int images_min = 4;
  int images_max = 4;
  std::int64_t size = 64;
  std::uint64_t seed = 42;
  double train_ratio = 0.77;
  double val_ratio = 0.09;
  double test_ratio = 0.14;
};

struct SplitOptions {
  std::string manifest;
  std::string out;
  double train_ratio = 0.77;
  double val_ratio = 0.09;
  double test_ratio = 0.14;
  std::uint64_t seed = 1;
};

struct TrainOptions {
  std::string config_file;
  std::string manifest;
  std::string data_root;
  std::string out;
  std::string resume;
  bool paper_faithful = false;
  double width_multiplier = 0.0;  // 0: keep profile widths
  int epochs = 50;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 1;
  std::string precision = "f32";
  std::int64_t input_size = 0;  // 0: derive from the first image
  double base_lr = 0.001;
  int lr_step = 20;
  double lr_gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double dropout = 0.5;
  bool no_bn = false;
  bool no_augment = false;
  int checkpoint_every = 25;
  double stop_at_train_top1 = -1.0;
};

struct EvalOptions {
  std::string checkpoint;
  std::string manifest;
  std::string data_root;
  std::string split = "test";
  std::string out;
  std::string precision = "f32";
};

struct ReportOptions {
  std::string report_dir;
  std::string out;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw macnet::ParseError("config file: key '" + key + "' expects a boolean, got '" + value + "'");
}

// Flat key = value config for the train subcommand. Keys mirror the
// long flag names; command-line flags take precedence; unknown keys
// are rejected.
void apply_train_config_file(const std::string& path, const CLI::App& cmd, TrainOptions* opt) {
  std::ifstream is(path);
  if (!is) throw macnet::IoError("config file not found: " + path);

  const auto given = [&cmd](const std::string& flag) {
    return cmd.get_option(flag)->count() > 0;
  };
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>>
      setters = {
          {"manifest", [&](const std::string& v, const std::string&) { opt->manifest = v; }},
          {"data-root", [&](const std::string& v, const std::string&) { opt->data_root = v; }},
          {"out", [&](const std::string& v, const std::string&) { opt->out = v; }},
          {"resume", [&](const std::string& v, const std::string&) { opt->resume = v; }},
          {"paper-faithful",
           [&](const std::string& v, const std::string& k) { opt->paper_faithful = parse_bool(v, k); }},
          {"width-multiplier",
           [&](const std::string& v, const std::string&) { opt->width_multiplier = std::stod(v); }},
          {"epochs", [&](const std::string& v, const std::string&) { opt->epochs = std::stoi(v); }},
          {"batch-size",
           [&](const std::string& v, const std::string&) { opt->batch_size = std::stoll(v); }},
          {"seed", [&](const std::string& v, const std::string&) { opt->seed = std::stoull(v); }},
          {"precision", [&](const std::string& v, const std::string&) { opt->precision = v; }},
          {"input-size",
           [&](const std::string& v, const std::string&) { opt->input_size = std::stoll(v); }},
          {"lr", [&](const std::string& v, const std::string&) { opt->base_lr = std::stod(v); }},
          {"lr-step", [&](const std::string& v, const std::string&) { opt->lr_step = std::stoi(v); }},
          {"lr-gamma",
           [&](const std::string& v, const std::string&) { opt->lr_gamma = std::stod(v); }},
          {"momentum",
           [&](const std::string& v, const std::string&) { opt->momentum = std::stod(v); }},
          {"weight-decay",
           [&](const std::string& v, const std::string&) { opt->weight_decay = std::stod(v); }},
          {"dropout", [&](const std::string& v, const std::string&) { opt->dropout = std::stod(v); }},
          {"no-bn",
           [&](const std::string& v, const std::string& k) { opt->no_bn = parse_bool(v, k); }},
          {"no-augment",
           [&](const std::string& v, const std::string& k) { opt->no_augment = parse_bool(v, k); }},
          {"checkpoint-every",
           [&](const std::string& v, const std::string&) { opt->checkpoint_every = std::stoi(v); }},
          {"stop-at-train-top1",
           [&](const std::string& v, const std::string&) { opt->stop_at_train_top1 = std::stod(v); }},
      };

  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw macnet::ParseError("config file line " + std::to_string(line_no) +
                               ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw macnet::ParseError("config file line " + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
    }
    try {
      if (!given("--" + key)) it->second(value, key);
    } catch (const macnet::Error&) {
      throw;
    } catch (const std::exception&) {
      throw macnet::ParseError("config file line " + std::to_string(line_no) +
                               ": bad value '" + value + "' for key '" + key + "'");
    }
  }
}

fs::path resolve_out(const std::string& explicit_out, const std::string& out_root,
                     const char* fallback) {
  if (!explicit_out.empty()) return explicit_out;
  return fs::path(out_root) / fallback;
}

void copy_file_over(const fs::path& from, const fs::path& to) {
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

int run_synth(const SynthOptions& opt, const std::string& out_root) {
  macnet::SynthSpec spec;
  spec.num_classes = opt.classes;
  spec.events_per_class = opt.events_per_class;
  spec.images_per_event_min = opt.images_min;
  spec.images_per_event_max = opt.images_max;
  spec.height = spec.width = opt.size;
  spec.seed = opt.seed;

  const fs::path out_dir = resolve_out(opt.out, out_root, "synth_data");
  auto manifest = macnet::generate_synthetic_dataset(spec, out_dir);
  macnet::event_split(manifest, opt.train_ratio, opt.val_ratio, opt.test_ratio, opt.seed);
  macnet::save_manifest(manifest, out_dir / "manifest.csv");
  macnet::write_stats_csv(manifest, out_dir / "stats.csv");

  std::cout << "dataset written to " << out_dir.string() << "\n";
  std::cout << "class";
  for (const char* s : {"train", "val", "test"}) {
    std::cout << '\t' << s << "(img/ev)";
  }
  std::cout << '\n';
  const auto counts = manifest.per_class_counts();
  for (std::size_t c = 0; c < manifest.class_names.size(); ++c) {
    std::cout << manifest.class_names[c];
    for (int s = 0; s < 3; ++s) {
      std::cout << '\t' << counts[c][static_cast<std::size_t>(s)].images << '/'
                << counts[c][static_cast<std::size_t>(s)].events;
    }
    std::cout << '\n';
  }
  std::cout << "total images: " << manifest.images_in(macnet::Split::kTrain) +
                                       manifest.images_in(macnet::Split::kVal) +
                                       manifest.images_in(macnet::Split::kTest)
            << '\n';
  return kExitOk;
}

int run_split(const SplitOptions& opt) {
  auto manifest = macnet::load_manifest(opt.manifest);
  macnet::event_split(manifest, opt.train_ratio, opt.val_ratio, opt.test_ratio, opt.seed);
  const fs::path out = opt.out.empty() ? fs::path(opt.manifest) : fs::path(opt.out);
  macnet::save_manifest(manifest, out);
  macnet::write_stats_csv(manifest, out.parent_path() / "stats.csv");
  std::cout << "split manifest written to " << out.string() << '\n';
  return kExitOk;
}

std::int64_t probe_image_extent(const macnet::DatasetManifest& manifest, const fs::path& root) {
  for (const auto& e : manifest.events) {
    if (!e.image_paths.empty()) {
      const auto img = macnet::load_image(root / e.image_paths.front());
      if (img.height != img.width) {
        throw macnet::ContractError("train: only square inputs supported, got " +
                                    std::to_string(img.height) + "x" + std::to_string(img.width));
      }
      return img.height;
    }
  }
  throw macnet::ManifestError("train: manifest has no images");
}

template <class S>
int run_train_typed(const TrainOptions& opt, const std::string& out_root) {
  const fs::path manifest_path = opt.manifest;
  auto manifest = macnet::load_manifest(manifest_path);
  const fs::path data_root =
      opt.data_root.empty() ? manifest_path.parent_path() : fs::path(opt.data_root);
  const fs::path run_dir = resolve_out(opt.out, out_root, "run");
  fs::create_directories(run_dir);

  macnet::TrainRunConfig run_cfg;
  run_cfg.epochs = opt.epochs;
  run_cfg.batch_size = opt.batch_size;
  run_cfg.seed = opt.seed;
  run_cfg.checkpoint_every = opt.checkpoint_every;
  run_cfg.momentum = opt.momentum;
  run_cfg.weight_decay = opt.weight_decay;
  run_cfg.lr.base_lr = opt.base_lr;
  run_cfg.lr.step_size_epochs = opt.lr_step;
  run_cfg.lr.gamma = opt.lr_gamma;
  run_cfg.augment = !opt.no_augment;
  run_cfg.run_dir = run_dir;
  run_cfg.stop_at_train_top1 = opt.stop_at_train_top1;

  int start_epoch = 0;
  std::vector<macnet::HistoryRow> prior_history;
  macnet::SgdOptimizer<S> optimizer(opt.momentum, opt.weight_decay);
  std::optional<macnet::MacNetModel<S>> model;

  if (!opt.resume.empty()) {
    auto loaded = macnet::load_checkpoint<S>(opt.resume);
    model.emplace(std::move(loaded.model));
    optimizer.restore_velocities(std::move(loaded.velocities));
    start_epoch = static_cast<int>(loaded.epoch) + 1;
    run_cfg.seed = loaded.seed;
    // Continue an existing history when resuming inside the same run dir.
    const fs::path history_path = run_dir / "history.csv";
    if (fs::exists(history_path)) {
      std::ifstream is(history_path);
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        macnet::HistoryRow row;
        std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf", &row.epoch, &row.lr,
                    &row.train_loss, &row.val_top1, &row.val_top5, &row.val_macro_f1,
                    &row.train_top1);
        if (row.epoch < start_epoch) prior_history.push_back(row);
      }
    }
  } else {
    macnet::MacNetConfig cfg =
        opt.paper_faithful ? macnet::MacNetConfig::paper_faithful() : macnet::MacNetConfig::desk();
    if (opt.width_multiplier > 0.0) {
      cfg = (opt.paper_faithful ? macnet::MacNetConfig::paper_faithful()
                                : macnet::MacNetConfig::desk())
                .with_width_multiplier(opt.width_multiplier);
    }
    cfg.num_classes = static_cast<std::int64_t>(manifest.class_names.size());
    const std::int64_t extent =
        opt.input_size > 0 ? opt.input_size : probe_image_extent(manifest, data_root);
    cfg.input_h = cfg.input_w = extent;
    cfg.dropout_p = opt.dropout;
    cfg.bn_enabled = !opt.no_bn;
    model.emplace(macnet::MacNetModel<S>::init(cfg, opt.seed));
  }

  // Snapshot the effective settings and the manifest for replay.
  {
    std::ofstream os(run_dir / "config_snapshot.txt");
    os << model->config().to_key_values();
    os << "epochs=" << run_cfg.epochs << '\n';
    os << "batch_size=" << run_cfg.batch_size << '\n';
    os << "seed=" << run_cfg.seed << '\n';
    os << "base_lr=" << run_cfg.lr.base_lr << '\n';
    os << "lr_step=" << run_cfg.lr.step_size_epochs << '\n';
    os << "lr_gamma=" << run_cfg.lr.gamma << '\n';
    os << "momentum=" << run_cfg.momentum << '\n';
    os << "weight_decay=" << run_cfg.weight_decay << '\n';
    os << "augment=" << (run_cfg.augment ? 1 : 0) << '\n';
    os << "precision=" << (sizeof(S) == 8 ? "f64" : "f32") << '\n';
  }
  copy_file_over(manifest_path, run_dir / "manifest.csv");

  const auto t0 = std::chrono::steady_clock::now();
  auto result = macnet::train(*model, manifest, data_root, run_cfg, &optimizer, start_epoch,
                              std::move(prior_history));
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::cout << "run dir: " << run_dir.string() << '\n';
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    std::cout << "final epoch " << last.epoch << ": train_loss " << last.train_loss
              << ", val_top1 " << last.val_top1 << ", train_top1 " << last.train_top1 << '\n';
  }
  std::cout << "best val macro-F1 " << result.best_val_macro_f1 << " at epoch "
            << result.best_epoch << '\n';
  std::cout << "wall time " << seconds << " s\n";
  return kExitOk;
}

int run_train(const TrainOptions& opt, const std::string& out_root) {
  if (opt.precision == "f64") return run_train_typed<double>(opt, out_root);
  if (opt.precision == "f32") return run_train_typed<float>(opt, out_root);
  throw CLI::ValidationError("--precision must be f32 or f64");
}

template <class S>
int run_eval_typed(const EvalOptions& opt, const std::string& out_root) {
  auto loaded = macnet::load_checkpoint<S>(opt.checkpoint);
  auto manifest = macnet::load_manifest(opt.manifest);
  const fs::path data_root =
      opt.data_root.empty() ? fs::path(opt.manifest).parent_path() : fs::path(opt.data_root);
  const macnet::Split split = macnet::split_from_name(opt.split);
  auto report = macnet::evaluate(loaded.model, manifest, data_root, split);
  const fs::path out_dir = resolve_out(opt.out, out_root, "reports");
  macnet::write_report_files(report, out_dir);
  std::cout << "reports written to " << out_dir.string() << '\n';
  std::cout << macnet::report_summary_text(report);
  return kExitOk;
}

int run_eval(const EvalOptions& opt, const std::string& out_root) {
  if (opt.precision == "f64") return run_eval_typed<double>(opt, out_root);
  if (opt.precision == "f32") return run_eval_typed<float>(opt, out_root);
  throw CLI::ValidationError("--precision must be f32 or f64");
}

int run_report(const ReportOptions& opt) {
  const fs::path report_dir = opt.report_dir;
  const fs::path out_dir = opt.out.empty() ? report_dir : fs::path(opt.out);
  fs::create_directories(out_dir);

  const auto rows = macnet::read_per_class_csv(report_dir / "per_class.csv");
  const auto confusion = macnet::read_confusion_csv(report_dir / "confusion.csv");
  {
    std::ofstream os(out_dir / "f1_bars.svg");
    if (!os) throw macnet::IoError("cannot write f1_bars.svg");
    os << macnet::render_f1_bars_svg(rows);
  }
  {
    std::ofstream os(out_dir / "confusion.svg");
    if (!os) throw macnet::IoError("cannot write confusion.svg");
    os << macnet::render_confusion_svg(confusion);
  }
  // Echo the stored summary when present, otherwise recompute the macro
  // block from the per-class rows.
  const fs::path summary_path = report_dir / "summary.txt";
  if (fs::exists(summary_path)) {
    std::ifstream is(summary_path);
    std::cout << is.rdbuf();
  } else {
    double mp = 0, mr = 0, mf = 0;
    for (const auto& r : rows) {
      mp += r.precision;
      mr += r.recall;
      mf += r.f1;
    }
    const double k = static_cast<double>(rows.size());
    std::cout << "macro_precision " << mp / k << '\n'
              << "macro_recall " << mr / k << '\n'
              << "macro_f1 " << mf / k << '\n';
  }
  std::cout << "charts written to " << out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MACNet food-places classifier pipeline"};
  app.require_subcommand(1);

  std::string out_root = ".";
  app.add_option("--out-root", out_root, "Default root for output directories")
      ->envname("MACNET_OUT_ROOT");

  SynthOptions synth_opt;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic photo-stream dataset");
  synth->add_option("--out", synth_opt.out, "Output directory");
  synth->add_option("--classes", synth_opt.classes, "Number of classes")->check(CLI::PositiveNumber);
  synth->add_option("--events-per-class", synth_opt.events_per_class, "Events per class")
      ->check(CLI::PositiveNumber);
  synth->add_option("--images-min", synth_opt.images_min, "Min images per event")
      ->check(CLI::PositiveNumber);
  synth->add_option("--images-max", synth_opt.images_max, "Max images per event")
      ->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_opt.size, "Image extent (square)")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_opt.seed, "Generator and split seed");
  synth->add_option("--train-ratio", synth_opt.train_ratio, "Train image ratio");
  synth->add_option("--val-ratio", synth_opt.val_ratio, "Val image ratio");
  synth->add_option("--test-ratio", synth_opt.test_ratio, "Test image ratio");

  SplitOptions split_opt;
  auto* split = app.add_subcommand("split", "Re-split an existing manifest by events");
  split->add_option("--manifest", split_opt.manifest, "Manifest CSV")->required();
  split->add_option("--out", split_opt.out, "Output manifest path (default: in place)");
  split->add_option("--train-ratio", split_opt.train_ratio, "Train image ratio");
  split->add_option("--val-ratio", split_opt.val_ratio, "Val image ratio");
  split->add_option("--test-ratio", split_opt.test_ratio, "Test image ratio");
  split->add_option("--seed", split_opt.seed, "Split seed");

  TrainOptions train_opt;
  auto* train = app.add_subcommand("train", "Train the classifier");
  train->add_option("--config", train_opt.config_file,
                    "Flat key=value config file; flags override it");
  train->add_option("--manifest", train_opt.manifest, "Manifest CSV");
  train->add_option("--data-root", train_opt.data_root, "Image root (default: manifest dir)");
  train->add_option("--out", train_opt.out, "Run directory");
  train->add_option("--resume", train_opt.resume, "Checkpoint to resume from");
  train->add_flag("--paper-faithful", train_opt.paper_faithful,
                  "Use the published profile (full widths, batch 32, 100 epochs)");
  train->add_option("--width-multiplier", train_opt.width_multiplier, "Scale profile widths");
  train->add_option("--epochs", train_opt.epochs, "Training epochs")
      ->check(CLI::Range(1, 1000000));
  train->add_option("--batch-size", train_opt.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  train->add_option("--seed", train_opt.seed, "Run seed");
  train->add_option("--precision", train_opt.precision, "f32 or f64");
  train->add_option("--input-size", train_opt.input_size, "Input extent override");
  train->add_option("--lr", train_opt.base_lr, "Base learning rate");
  train->add_option("--lr-step", train_opt.lr_step, "Epochs per LR step");
  train->add_option("--lr-gamma", train_opt.lr_gamma, "LR decay factor");
  train->add_option("--momentum", train_opt.momentum, "SGD momentum");
  train->add_option("--weight-decay", train_opt.weight_decay, "L2 weight decay");
  train->add_option("--dropout", train_opt.dropout, "Dropout probability");
  train->add_flag("--no-bn", train_opt.no_bn, "Disable batch norm");
  train->add_flag("--no-augment", train_opt.no_augment, "Disable train augmentation");
  train->add_option("--checkpoint-every", train_opt.checkpoint_every,
                    "Checkpoint cadence (epochs)");
  train->add_option("--stop-at-train-top1", train_opt.stop_at_train_top1,
                    "Stop once train top-1 reaches this value");

  EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", eval_opt.checkpoint, "Checkpoint file")->required();
  eval->add_option("--manifest", eval_opt.manifest, "Manifest CSV")->required();
  eval->add_option("--data-root", eval_opt.data_root, "Image root (default: manifest dir)");
  eval->add_option("--split", eval_opt.split, "train|val|test");
  eval->add_option("--out", eval_opt.out, "Report output directory");
  eval->add_option("--precision", eval_opt.precision, "f32 or f64");

  ReportOptions report_opt;
  auto* report = app.add_subcommand("report", "Render SVG charts from report CSVs");
  report->add_option("--report-dir", report_opt.report_dir, "Directory with per_class.csv etc.")
      ->required();
  report->add_option("--out", report_opt.out, "Chart output directory (default: report dir)");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return run_synth(synth_opt, out_root);
    if (split->parsed()) return run_split(split_opt);
    if (train->parsed()) {
      if (!train_opt.config_file.empty()) {
        apply_train_config_file(train_opt.config_file, *train, &train_opt);
      }
      if (train_opt.manifest.empty()) {
        throw CLI::RequiredError("--manifest");
      }
      if (train_opt.epochs < 1) {
        throw CLI::ValidationError("--epochs must be >= 1");
      }
      return run_train(train_opt, out_root);
    }
    if (eval->parsed()) return run_eval(eval_opt, out_root);
    if (report->parsed()) return run_report(report_opt);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ConfigError& e) {
    std::cerr << "config file error: " << e.what() << '\n';
    return kExitInput;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const macnet::NumericFault& e) {
    std::cerr << "numeric fault: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const macnet::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}
