// Pipeline driver: corpus augmentation, two-phase CNN training, feature
// extraction, kernel SVM comparison, toy CycleGAN synthesis and reporting.
// Exit codes: 0 success, 2 usage, 3 data/format problem, 4 divergence or
// non-convergence.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "statekit/augment.hpp"
#include "statekit/checkpoint.hpp"
#include "statekit/cyclegan.hpp"
#include "statekit/dataset.hpp"
#include "statekit/errors.hpp"
#include "statekit/model.hpp"
#include "statekit/png.hpp"
#include "statekit/svm.hpp"
#include "statekit/svm_io.hpp"
#include "statekit/trainer.hpp"

namespace fs = std::filesystem;
using namespace statekit;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct GlobalOpts {
  uint64_t seed = 42;
  std::string output_dir = ".";
  size_t threads = 1;
  std::string data_root;  // overrides the manifest-relative image root
};

DatasetManifest load_manifest_with_root(const std::string& path, const GlobalOpts& g) {
  DatasetManifest m = load_manifest(path);
  if (!g.data_root.empty()) m.root = g.data_root;
  return m;
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.output_dir);
  return (fs::path(g.output_dir) / name).string();
}

void add_augment_flags(CLI::App* cmd, AugmentationConfig* cfg) {
  cmd->add_option("--rotation", cfg->rotation_max_deg, "max |rotation| in degrees")
      ->capture_default_str();
  cmd->add_option("--shear", cfg->shear_max, "max |shear| in radians")->capture_default_str();
  cmd->add_option("--zoom", cfg->zoom_delta, "zoom range half-width around 1")
      ->capture_default_str();
  cmd->add_option("--rescale", cfg->rescale_factor, "intensity rescale factor")
      ->capture_default_str();
  cmd->add_flag("--hflip,!--no-hflip", cfg->hflip, "enable random horizontal flips")
      ->capture_default_str();
  cmd->add_flag("--vflip,!--no-vflip", cfg->vflip, "enable random vertical flips")
      ->capture_default_str();
}

// Loads the rows of one label (any split) as unit-domain side x side images.
std::vector<Image> load_label_images(const DatasetManifest& manifest, int label, int side) {
  std::vector<Image> out;
  for (const LabeledSample& s : manifest.samples) {
    if (s.label != label) continue;
    Image img = expand_to_rgb(load_image((fs::path(manifest.root) / s.path).string()));
    img = resize_to_square(img, side);
    out.push_back(rescale(img, 1.0 / 255.0));
  }
  return out;
}

// ---- augment ----

struct AugmentOpts {
  std::string manifest;
  size_t per_image = 1;
  AugmentationConfig cfg;
};

int cmd_augment(const GlobalOpts& g, const AugmentOpts& o) {
  const DatasetManifest manifest = load_manifest_with_root(o.manifest, g);
  validate(o.cfg);
  fs::create_directories(g.output_dir);

  DatasetManifest out;
  out.root = g.output_dir;
  out.samples.resize(manifest.samples.size() * o.per_image);
  parallel_for(manifest.samples.size(), g.threads, [&](size_t i) {
    const LabeledSample& src = manifest.samples[i];
    const Image img =
        expand_to_rgb(load_image((fs::path(manifest.root) / src.path).string()));
    for (size_t k = 0; k < o.per_image; ++k) {
      Rng rng(derive_seed(g.seed, "augment", i * o.per_image + k));
      const Image aug = to_byte(augment_sample(img, o.cfg, rng));
      char name[64];
      std::snprintf(name, sizeof(name), "aug_%05zu_%02zu.png", i, k);
      save_image(aug, out_path(g, name));
      LabeledSample& row = out.samples[i * o.per_image + k];
      row.path = name;
      row.label = src.label;
      row.split = src.split;
    }
  });
  save_manifest(out, out_path(g, "manifest.csv"));
  std::cout << "wrote " << out.samples.size() << " augmented images and manifest.csv to "
            << g.output_dir << "\n";
  return 0;
}

// ---- train ----

struct TrainOpts {
  std::string manifest;
  std::string extra_manifest;
  std::string init_checkpoint;
  TrainConfig config;
  size_t input_side = 32;
  double dropout = 0.5;
  double train_frac = 0.7, val_frac = 0.15, test_frac = 0.15;
};

int cmd_train(const GlobalOpts& g, TrainOpts o) {
  DatasetManifest manifest = load_manifest_with_root(o.manifest, g);
  if (!o.extra_manifest.empty()) {
    const DatasetManifest extra = load_manifest(o.extra_manifest);
    for (LabeledSample s : extra.samples) {
      s.path = fs::absolute(fs::path(extra.root) / s.path).string();
      manifest.samples.push_back(std::move(s));
    }
  }
  if (manifest.indices_of(Split::train).empty() && manifest.indices_of(Split::val).empty()) {
    manifest = split_manifest(manifest, o.train_frac, o.val_frac, o.test_frac, g.seed);
  }

  o.config.seed = g.seed;
  o.config.threads = g.threads;

  HeadSpec head;
  head.dropout_rate = o.dropout;
  ModelGraph model = build_model(g.seed, head, o.input_side);
  if (!o.init_checkpoint.empty()) {
    ModelGraph loaded = load_checkpoint(o.init_checkpoint);
    require_same_structure(loaded, model);
    model = std::move(loaded);
  }

  const SamplePool pool = load_pool(manifest, o.input_side, g.threads);
  const size_t total = o.config.phase1_epochs + o.config.phase2_epochs;
  size_t done = 0;
  const MetricsHistory history =
      train_two_phase(model, pool, o.config, [&](const MetricsRecord& r) {
        ++done;
        std::printf("phase %d epoch %zu (%zu/%zu) train_loss=%.4f train_acc=%.4f "
                    "val_loss=%.4f val_acc=%.4f\n",
                    r.phase, r.epoch, done, total, r.train_loss, r.train_acc, r.val_loss,
                    r.val_acc);
        std::fflush(stdout);
      });

  write_metrics(history, out_path(g, "metrics.csv"));
  emit_curves(history, out_path(g, "curves.svg"));
  save_checkpoint(model, out_path(g, "checkpoint.skck"));
  std::cout << "wrote checkpoint.skck, metrics.csv, curves.svg to " << g.output_dir << "\n";
  return 0;
}

// ---- extract ----

struct ExtractOpts {
  std::string checkpoint;
  std::string manifest;
  std::string split = "all";
  std::string out_name = "features.feat";
  long at_layer = -1;
  double rescale_factor = 1.0 / 255.0;
};

int cmd_extract(const GlobalOpts& g, const ExtractOpts& o) {
  ModelGraph model = load_checkpoint(o.checkpoint);
  DatasetManifest manifest = load_manifest_with_root(o.manifest, g);
  if (o.split != "all") {
    const Split want = split_from_string(o.split);
    std::vector<LabeledSample> kept;
    for (const LabeledSample& s : manifest.samples) {
      if (s.split == want) kept.push_back(s);
    }
    manifest.samples = std::move(kept);
  }
  if (manifest.samples.empty()) {
    throw DataError("no samples in split \"" + o.split + "\" of " + o.manifest);
  }
  const SamplePool pool = load_pool(manifest, model.input_side, g.threads);
  const size_t boundary = o.at_layer < 0 ? model.layers.size() - 1
                                         : static_cast<size_t>(o.at_layer);

  FeatureMatrix fm;
  fm.rows = pool.size();
  fm.labels = pool.labels;
  const size_t batch_size = 64;
  for (size_t start = 0; start < pool.size(); start += batch_size) {
    const size_t n = std::min(batch_size, pool.size() - start);
    Tensor batch({n, 3, pool.side, pool.side});
    for (size_t b = 0; b < n; ++b) {
      image_into_batch(rescale(pool.images[start + b], o.rescale_factor), batch, b);
    }
    const Tensor feats = extract_features(model, batch, boundary);
    if (fm.cols == 0) {
      fm.cols = feats.dim(1);
      fm.data.reserve(fm.rows * fm.cols);
    }
    fm.data.insert(fm.data.end(), feats.data.begin(), feats.data.end());
  }
  fm.validate();
  save_features(fm, out_path(g, o.out_name));
  std::cout << "wrote " << fm.rows << "x" << fm.cols << " features to " << o.out_name << "\n";
  return 0;
}

// ---- svm ----

struct SvmOpts {
  std::string train_features;
  std::string val_features;
  std::string kernel = "linear";
  double C = 1.0;
  double gamma = 0.0;  // <= 0: resolve from data
  double tol = 1e-3;
};

int cmd_svm(const GlobalOpts& g, const SvmOpts& o) {
  const FeatureMatrix train = load_features(o.train_features);
  if (o.kernel == "all") {
    if (o.val_features.empty()) {
      throw UsageError("--kernel all needs --val-features for the benchmark");
    }
    const FeatureMatrix val = load_features(o.val_features);
    const std::vector<KernelScore> scores =
        benchmark_kernels(train, val, o.C, o.gamma, o.tol, g.seed, g.threads);
    write_kernel_table(scores, out_path(g, "kernel_table.csv"));
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i) {
      if (scores[i].accuracy > scores[best].accuracy) best = i;
    }
    KernelSpec spec;
    spec.kind = kernel_kind_from_name(scores[best].kernel);
    spec.gamma = spec.kind == KernelKind::rbf ? o.gamma : 0.0;
    save_svm_model(train_multiclass(train, spec, o.C, o.tol, g.seed, g.threads),
                   out_path(g, "svm_model.json"));
    for (const KernelScore& s : scores) {
      std::printf("%s accuracy=%.6f\n", s.kernel.c_str(), s.accuracy);
    }
    return 0;
  }

  KernelSpec spec;
  spec.kind = kernel_kind_from_name(o.kernel);
  spec.gamma = o.gamma;
  const SvmModel model = train_multiclass(train, spec, o.C, o.tol, g.seed, g.threads);
  save_svm_model(model, out_path(g, "svm_model.json"));
  std::printf("train accuracy=%.6f\n", accuracy_on(model, train));
  if (!o.val_features.empty()) {
    const FeatureMatrix val = load_features(o.val_features);
    const double acc = accuracy_on(model, val);
    write_kernel_table({{o.kernel, acc}}, out_path(g, "kernel_table.csv"));
    std::printf("val accuracy=%.6f\n", acc);
  }
  return 0;
}

// ---- evaluate ----

struct EvaluateOpts {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::string svm_model;
  std::string features;
};

int cmd_evaluate(const GlobalOpts& g, const EvaluateOpts& o) {
  if (!o.svm_model.empty()) {
    if (o.features.empty()) throw UsageError("--svm-model needs --features");
    const SvmModel model = load_svm_model(o.svm_model);
    const FeatureMatrix fm = load_features(o.features);
    std::printf("svm accuracy=%.6f\n", accuracy_on(model, fm));
    return 0;
  }
  if (o.checkpoint.empty() || o.manifest.empty()) {
    throw UsageError("evaluate needs --checkpoint and --manifest (or --svm-model)");
  }
  ModelGraph model = load_checkpoint(o.checkpoint);
  const DatasetManifest manifest = load_manifest_with_root(o.manifest, g);
  const SamplePool pool = load_pool(manifest, model.input_side, g.threads);
  const EvalResult r = evaluate(model, pool, split_from_string(o.split));
  std::printf("split=%s accuracy=%.6f loss=%.6f\n", o.split.c_str(), r.accuracy, r.mean_loss);
  return 0;
}

// ---- gan-train ----

struct GanTrainOpts {
  std::string manifest;
  std::string domain_x;
  std::string domain_y;
  GanConfig config;
};

int cmd_gan_train(const GlobalOpts& g, GanTrainOpts o) {
  const DatasetManifest manifest = load_manifest_with_root(o.manifest, g);
  const int label_x = label_id_from_name(o.domain_x);
  const int label_y = label_id_from_name(o.domain_y);
  const int side = static_cast<int>(o.config.image_side);
  const std::vector<Image> xs = load_label_images(manifest, label_x, side);
  const std::vector<Image> ys = load_label_images(manifest, label_y, side);
  if (xs.empty() || ys.empty()) {
    throw DataError("domains must be nonempty: \"" + o.domain_x + "\" has " +
                    std::to_string(xs.size()) + " images, \"" + o.domain_y + "\" has " +
                    std::to_string(ys.size()));
  }
  o.config.seed = g.seed;
  GanBundle bundle = build_gan(o.config);
  const std::vector<LossRecord> trace =
      gan_train(bundle, xs, ys, [&](const LossRecord& r) {
        if (r.step % 100 == 0 || r.step == o.config.steps) {
          std::printf("step %zu/%zu d_x=%.4f d_y=%.4f adv_g=%.4f adv_f=%.4f cycle=%.4f\n",
                      r.step, o.config.steps, r.d_x, r.d_y, r.adv_g, r.adv_f, r.cycle);
          std::fflush(stdout);
        }
      });
  write_loss_trace(trace, out_path(g, "gan_losses.csv"));
  save_gan_bundle(bundle, out_path(g, "gan.skgb"));
  std::cout << "wrote gan.skgb and gan_losses.csv to " << g.output_dir << "\n";
  return 0;
}

// ---- gan-generate ----

struct GanGenerateOpts {
  std::string bundle;
  std::string manifest;
  std::string source_label;
  std::string target_label;
  std::string direction = "x2y";
  size_t count = 0;  // 0: all source images
};

int cmd_gan_generate(const GlobalOpts& g, const GanGenerateOpts& o) {
  GanBundle bundle = load_gan_bundle(o.bundle);
  const DatasetManifest manifest = load_manifest_with_root(o.manifest, g);
  const int src = label_id_from_name(o.source_label);
  const int dst = label_id_from_name(o.target_label);
  if (o.direction != "x2y" && o.direction != "y2x") {
    throw UsageError("--direction must be x2y or y2x");
  }
  std::vector<Image> inputs =
      load_label_images(manifest, src, static_cast<int>(bundle.config.image_side));
  if (inputs.empty()) {
    throw DataError("no images labeled \"" + o.source_label + "\" in " + o.manifest);
  }
  if (o.count > 0 && o.count < inputs.size()) inputs.resize(o.count);
  const std::vector<Image> outputs = gan_generate(
      bundle, inputs,
      o.direction == "x2y" ? GanDirection::x_to_y : GanDirection::y_to_x);

  DatasetManifest fragment;
  fragment.root = g.output_dir;
  for (size_t i = 0; i < outputs.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "synthetic_%05zu.png", i);
    save_image(to_byte(outputs[i]), out_path(g, name));
    LabeledSample row;
    row.path = name;
    row.label = dst;
    row.split = Split::train;
    fragment.samples.push_back(std::move(row));
  }
  save_manifest(fragment, out_path(g, "synthetic_manifest.csv"));
  std::cout << "wrote " << outputs.size() << " synthetic images and synthetic_manifest.csv to "
            << g.output_dir << "\n";
  return 0;
}

// ---- report ----

struct ReportOpts {
  std::vector<std::string> runs;  // name=metrics.csv
  std::string kernel_table;
};

struct ReportRow {
  std::string model;
  double accuracy = 0.0;
  std::string loss;    // "-" for SVM rows
  std::string epochs;  // "-" for SVM rows
};

int cmd_report(const GlobalOpts& g, const ReportOpts& o) {
  std::vector<ReportRow> rows;
  for (const std::string& run : o.runs) {
    const auto eq = run.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == run.size()) {
      throw UsageError("--run expects name=metrics.csv, got \"" + run + "\"");
    }
    const std::string name = run.substr(0, eq);
    const MetricsHistory history = read_metrics(run.substr(eq + 1));
    if (history.empty()) {
      throw DataError(run.substr(eq + 1) + " has no metric records");
    }
    ReportRow row;
    row.model = name;
    row.accuracy = history.back().val_acc;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", history.back().val_loss);
    row.loss = buf;
    row.epochs = std::to_string(history.size());
    rows.push_back(std::move(row));
  }
  if (!o.kernel_table.empty()) {
    std::ifstream is(o.kernel_table);
    if (!is) throw DataError("cannot open kernel table " + o.kernel_table);
    std::string line;
    if (!std::getline(is, line) || line != "kernel,accuracy") {
      throw FormatError(o.kernel_table + ": expected header `kernel,accuracy`");
    }
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw FormatError(o.kernel_table + ": malformed row \"" + line + "\"");
      }
      ReportRow row;
      row.model = "svm (" + line.substr(0, comma) + ")";
      try {
        row.accuracy = std::stod(line.substr(comma + 1));
      } catch (const std::exception&) {
        throw FormatError(o.kernel_table + ": malformed accuracy in \"" + line + "\"");
      }
      row.loss = "-";
      row.epochs = "-";
      rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw UsageError("report needs at least one --run or --kernel-table");

  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.accuracy != b.accuracy) return a.accuracy < b.accuracy;
    return a.model < b.model;
  });

  std::ofstream csv(out_path(g, "report.csv"));
  csv << "model,validation_accuracy,validation_loss,epochs\n";
  std::printf("%-24s %20s %16s %8s\n", "model", "validation_accuracy", "validation_loss",
              "epochs");
  for (const ReportRow& r : rows) {
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", r.accuracy);
    csv << r.model << "," << acc << "," << r.loss << "," << r.epochs << "\n";
    std::printf("%-24s %20s %16s %8s\n", r.model.c_str(), acc, r.loss.c_str(),
                r.epochs.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooking-state recognition pipeline (CNN features + kernel SVM + toy CycleGAN)"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "base seed; all randomness derives from it")
      ->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "directory for all outputs")
      ->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (results are thread-count invariant)")
      ->capture_default_str();
  app.add_option("--data-root", g.data_root, "override the manifest-relative image root");

  AugmentOpts aug;
  CLI::App* c_aug = app.add_subcommand("augment", "write augmented copies of a corpus");
  c_aug->add_option("--manifest", aug.manifest, "input manifest CSV")->required();
  c_aug->add_option("--per-image", aug.per_image, "augmented variants per source image")
      ->capture_default_str();
  add_augment_flags(c_aug, &aug.cfg);

  TrainOpts tr;
  CLI::App* c_tr = app.add_subcommand("train", "two-phase transfer training of the classifier");
  c_tr->add_option("--manifest", tr.manifest, "input manifest CSV")->required();
  c_tr->add_option("--extra-manifest", tr.extra_manifest,
                   "extra rows (e.g. synthetic corpus) appended before splitting");
  c_tr->add_option("--init-checkpoint", tr.init_checkpoint,
                   "start from these weights instead of fresh initialization");
  c_tr->add_option("--lr", tr.config.lr, "SGD learning rate")->capture_default_str();
  c_tr->add_option("--phase1-epochs", tr.config.phase1_epochs, "head-only epochs")
      ->capture_default_str();
  c_tr->add_option("--phase2-epochs", tr.config.phase2_epochs, "fine-tuning epochs")
      ->capture_default_str();
  c_tr->add_option("--unfreeze-first", tr.config.unfreeze_first_n,
                   "backbone layers unfrozen in phase 2")
      ->capture_default_str();
  c_tr->add_option("--batch-size", tr.config.batch_size, "training batch size")
      ->capture_default_str();
  c_tr->add_option("--input-side", tr.input_side, "square input side (multiple of 8)")
      ->capture_default_str();
  c_tr->add_option("--dropout", tr.dropout, "head dropout rate")->capture_default_str();
  c_tr->add_option("--train-frac", tr.train_frac, "auto-split train fraction")
      ->capture_default_str();
  c_tr->add_option("--val-frac", tr.val_frac, "auto-split val fraction")->capture_default_str();
  c_tr->add_option("--test-frac", tr.test_frac, "auto-split test fraction")
      ->capture_default_str();
  add_augment_flags(c_tr, &tr.config.augmentation);

  ExtractOpts ex;
  CLI::App* c_ex = app.add_subcommand("extract", "extract feature vectors from a checkpoint");
  c_ex->add_option("--checkpoint", ex.checkpoint, "trained model checkpoint")->required();
  c_ex->add_option("--manifest", ex.manifest, "input manifest CSV")->required();
  c_ex->add_option("--split", ex.split, "train, val, test or all")->capture_default_str();
  c_ex->add_option("--out-name", ex.out_name, "feature file name inside --output-dir")
      ->capture_default_str();
  c_ex->add_option("--at-layer", ex.at_layer,
                   "layer boundary to read activations at (-1: input of the final dense)")
      ->capture_default_str();
  c_ex->add_option("--rescale", ex.rescale_factor, "intensity rescale factor")
      ->capture_default_str();

  SvmOpts sv;
  CLI::App* c_sv = app.add_subcommand("svm", "train the one-vs-one kernel SVM on features");
  c_sv->add_option("--train-features", sv.train_features, "training feature file")->required();
  c_sv->add_option("--val-features", sv.val_features, "validation feature file");
  c_sv->add_option("--kernel", sv.kernel, "linear, quadratic, rbf or all")
      ->capture_default_str();
  c_sv->add_option("--C", sv.C, "soft-margin penalty")->capture_default_str();
  c_sv->add_option("--gamma", sv.gamma, "rbf gamma (<=0: 1/(D*var) heuristic)")
      ->capture_default_str();
  c_sv->add_option("--tol", sv.tol, "KKT tolerance")->capture_default_str();

  EvaluateOpts ev;
  CLI::App* c_ev = app.add_subcommand("evaluate", "accuracy/loss of a checkpoint or SVM model");
  c_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  c_ev->add_option("--manifest", ev.manifest, "input manifest CSV");
  c_ev->add_option("--split", ev.split, "split to evaluate")->capture_default_str();
  c_ev->add_option("--svm-model", ev.svm_model, "svm model JSON (with --features)");
  c_ev->add_option("--features", ev.features, "feature file for --svm-model");

  GanTrainOpts gt;
  CLI::App* c_gt = app.add_subcommand("gan-train", "train the toy CycleGAN between two labels");
  c_gt->add_option("--manifest", gt.manifest, "input manifest CSV")->required();
  c_gt->add_option("--domain-x", gt.domain_x, "state name of domain X")->required();
  c_gt->add_option("--domain-y", gt.domain_y, "state name of domain Y")->required();
  c_gt->add_option("--side", gt.config.image_side, "image side (16, 32, 64 or 128)")
      ->capture_default_str();
  c_gt->add_option("--lambda", gt.config.cycle_lambda, "cycle consistency weight")
      ->capture_default_str();
  c_gt->add_option("--lr", gt.config.lr, "SGD learning rate")->capture_default_str();
  c_gt->add_option("--steps", gt.config.steps, "training steps")->capture_default_str();
  c_gt->add_option("--batch-size", gt.config.batch_size, "per-domain batch size")
      ->capture_default_str();

  GanGenerateOpts gg;
  CLI::App* c_gg = app.add_subcommand("gan-generate", "translate images with a trained bundle");
  c_gg->add_option("--bundle", gg.bundle, "gan bundle file")->required();
  c_gg->add_option("--manifest", gg.manifest, "input manifest CSV")->required();
  c_gg->add_option("--source-label", gg.source_label, "state name of the input images")
      ->required();
  c_gg->add_option("--target-label", gg.target_label, "state name written to the fragment")
      ->required();
  c_gg->add_option("--direction", gg.direction, "x2y or y2x")->capture_default_str();
  c_gg->add_option("--count", gg.count, "max images to translate (0: all)")
      ->capture_default_str();

  ReportOpts rp;
  CLI::App* c_rp = app.add_subcommand("report", "combine runs into one comparison table");
  c_rp->add_option("--run", rp.runs, "name=metrics.csv (repeatable)");
  c_rp->add_option("--kernel-table", rp.kernel_table, "kernel benchmark CSV to include");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(c_aug)) return cmd_augment(g, aug);
    if (app.got_subcommand(c_tr)) return cmd_train(g, tr);
    if (app.got_subcommand(c_ex)) return cmd_extract(g, ex);
    if (app.got_subcommand(c_sv)) return cmd_svm(g, sv);
    if (app.got_subcommand(c_ev)) return cmd_evaluate(g, ev);
    if (app.got_subcommand(c_gt)) return cmd_gan_train(g, gt);
    if (app.got_subcommand(c_gg)) return cmd_gan_generate(g, gg);
    if (app.got_subcommand(c_rp)) return cmd_report(g, rp);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
