#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "statekit/augment.hpp"
#include "statekit/dataset.hpp"
#include "statekit/errors.hpp"
#include "statekit/model.hpp"
#include "statekit/parallel.hpp"
#include "statekit/png.hpp"

namespace statekit {

struct TrainConfig {
  double lr = 0.001;
  size_t phase1_epochs = 70;
  size_t phase2_epochs = 40;
  size_t unfreeze_first_n = 5;
  size_t batch_size = 32;
  uint64_t seed = 0;
  size_t threads = 1;
  AugmentationConfig augmentation;

  void validate(size_t backbone_len) const {
    if (lr <= 0.0) throw DataError("train config: learning rate must be > 0");
    if (batch_size == 0) throw DataError("train config: batch size must be > 0");
    if (unfreeze_first_n > backbone_len) {
      throw DataError("train config: cannot unfreeze " + std::to_string(unfreeze_first_n) +
                      " layers of a " + std::to_string(backbone_len) + "-layer backbone");
    }
    statekit::validate(augmentation);
  }
};

struct MetricsRecord {
  int phase = 1;
  size_t epoch = 1;  // 1-based within its phase
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
};

using MetricsHistory = std::vector<MetricsRecord>;

// ---- sample pool ----

// All images of a manifest loaded up front, warped to side x side, byte
// domain, three channels (grayscale inputs are replicated).
struct SamplePool {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<Split> splits;
  size_t side = 0;

  size_t size() const { return images.size(); }

  std::vector<size_t> indices_of(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == s) out.push_back(i);
    }
    return out;
  }
};

inline Image expand_to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) {
    throw DataError("expected 1 or 3 channels, got " + std::to_string(img.channels));
  }
  Image out(img.height, img.width, 3, img.domain);
  const size_t pixels = static_cast<size_t>(img.height) * img.width;
  for (size_t i = 0; i < pixels; ++i) {
    out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = img.data[i];
  }
  return out;
}

inline SamplePool load_pool(const DatasetManifest& manifest, size_t side, size_t threads = 1) {
  SamplePool pool;
  pool.side = side;
  pool.images.resize(manifest.samples.size());
  pool.labels.resize(manifest.samples.size());
  pool.splits.resize(manifest.samples.size());
  parallel_for(manifest.samples.size(), threads, [&](size_t i) {
    const LabeledSample& s = manifest.samples[i];
    const std::string full = (std::filesystem::path(manifest.root) / s.path).string();
    Image img = expand_to_rgb(load_image(full));
    pool.images[i] = resize_to_square(img, static_cast<int>(side));
    pool.labels[i] = s.label;
    pool.splits[i] = s.split;
  });
  return pool;
}

// Copies a unit-domain image into slot n of an NCHW batch tensor.
inline void image_into_batch(const Image& img, Tensor& batch, size_t n) {
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        batch.at4(n, static_cast<size_t>(c), static_cast<size_t>(y), static_cast<size_t>(x)) =
            img.at(y, x, c);
      }
    }
  }
}

// ---- evaluation ----

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

inline size_t argmax_lowest(const Tensor& logits, size_t row) {
  size_t best = 0;
  for (size_t k = 1; k < logits.dim(1); ++k) {
    if (logits.at2(row, k) > logits.at2(row, best)) best = k;  // ties keep the lowest id
  }
  return best;
}

inline EvalResult evaluate_indices(ModelGraph& model, const SamplePool& pool,
                                   const std::vector<size_t>& indices,
                                   double rescale_factor, size_t batch_size = 64) {
  if (indices.empty()) throw DataError("evaluate: split is empty");
  double loss_sum = 0.0;
  size_t correct = 0;
  for (size_t start = 0; start < indices.size(); start += batch_size) {
    const size_t n = std::min(batch_size, indices.size() - start);
    Tensor batch({n, 3, pool.side, pool.side});
    std::vector<int> labels(n);
    for (size_t b = 0; b < n; ++b) {
      const size_t idx = indices[start + b];
      image_into_batch(rescale(pool.images[idx], rescale_factor), batch, b);
      labels[b] = pool.labels[idx];
    }
    const Tensor logits = model.forward(batch, Mode::infer);
    auto [loss, grad] = softmax_cross_entropy(logits, labels);
    loss_sum += loss * static_cast<double>(n);
    for (size_t b = 0; b < n; ++b) {
      if (argmax_lowest(logits, b) == static_cast<size_t>(labels[b])) ++correct;
    }
  }
  const double total = static_cast<double>(indices.size());
  return {static_cast<double>(correct) / total, loss_sum / total};
}

inline EvalResult evaluate(ModelGraph& model, const SamplePool& pool, Split split,
                           double rescale_factor = 1.0 / 255.0, size_t batch_size = 64) {
  return evaluate_indices(model, pool, pool.indices_of(split), rescale_factor, batch_size);
}

// ---- two-phase training ----

using EpochCallback = std::function<void(const MetricsRecord&)>;

namespace detail {

// Batch starts over a shuffled order; a trailing batch of one is merged
// into its predecessor so batch statistics stay defined.
inline std::vector<std::pair<size_t, size_t>> batch_ranges(size_t n, size_t batch_size) {
  std::vector<std::pair<size_t, size_t>> out;
  for (size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(start, std::min(batch_size, n - start));
  }
  if (out.size() >= 2 && out.back().second == 1) {
    out.pop_back();
    out.back().second += 1;
  }
  return out;
}

struct EpochStats {
  double loss = 0.0;
  double acc = 0.0;
};

inline EpochStats run_train_epoch(ModelGraph& model, const SamplePool& pool,
                                  const std::vector<size_t>& train_indices,
                                  const TrainConfig& config, size_t global_epoch,
                                  size_t* augment_counter) {
  std::vector<size_t> order = train_indices;
  Rng shuffle_rng(derive_seed(config.seed, "shuffle", global_epoch));
  shuffle(order, shuffle_rng);

  double loss_sum = 0.0;
  size_t correct = 0;
  for (const auto& [start, n] : batch_ranges(order.size(), config.batch_size)) {
    Tensor batch({n, 3, pool.side, pool.side});
    std::vector<int> labels(n);
    parallel_for(n, config.threads, [&](size_t b) {
      const size_t idx = order[start + b];
      Rng rng(derive_seed(config.seed, "augment", *augment_counter + start + b));
      image_into_batch(augment_sample(pool.images[idx], config.augmentation, rng), batch, b);
      labels[b] = pool.labels[idx];
    });
    const Tensor logits = model.forward(batch, Mode::train);
    auto [loss, dlogits] = softmax_cross_entropy(logits, labels);
    if (!std::isfinite(loss)) {
      throw DivergenceError("training loss became non-finite at epoch " +
                            std::to_string(global_epoch + 1));
    }
    loss_sum += loss * static_cast<double>(n);
    for (size_t b = 0; b < n; ++b) {
      if (argmax_lowest(logits, b) == static_cast<size_t>(labels[b])) ++correct;
    }
    model.zero_grads();
    model.backward(dlogits);
    model.step(config.lr);
  }
  *augment_counter += order.size();
  const double total = static_cast<double>(order.size());
  return {loss_sum / total, static_cast<double>(correct) / total};
}

}  // namespace detail

// Phase 1 freezes the whole backbone and trains the head; phase 2
// additionally unfreezes the first unfreeze_first_n backbone layers.
// Training accuracy is accumulated from the train-mode logits of each step;
// validation uses inference mode.
inline MetricsHistory train_two_phase(ModelGraph& model, const SamplePool& pool,
                                      const TrainConfig& config,
                                      const EpochCallback& on_epoch = nullptr) {
  config.validate(model.backbone_len);
  const std::vector<size_t> train_indices = pool.indices_of(Split::train);
  if (train_indices.empty()) throw DataError("training split is empty");
  const std::vector<size_t> val_indices = pool.indices_of(Split::val);
  if (val_indices.empty()) throw DataError("validation split is empty");

  for (size_t i = 0; i < model.layers.size(); ++i) {
    if (auto* drop = dynamic_cast<DropoutLayer*>(model.layers[i].get())) {
      drop->reseed(derive_seed(config.seed, "dropout", i));
    }
  }

  MetricsHistory history;
  size_t global_epoch = 0;
  size_t augment_counter = 0;
  auto run_phase = [&](int phase, size_t epochs) {
    for (size_t e = 1; e <= epochs; ++e, ++global_epoch) {
      const detail::EpochStats train = detail::run_train_epoch(
          model, pool, train_indices, config, global_epoch, &augment_counter);
      const EvalResult val = evaluate_indices(model, pool, val_indices,
                                              config.augmentation.rescale_factor);
      MetricsRecord rec;
      rec.phase = phase;
      rec.epoch = e;
      rec.train_loss = train.loss;
      rec.train_acc = train.acc;
      rec.val_loss = val.mean_loss;
      rec.val_acc = val.accuracy;
      history.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }
  };

  set_all_trainable(model, false);
  set_trainable(model, model.backbone_len, model.layers.size() - model.backbone_len, true);
  run_phase(1, config.phase1_epochs);

  set_trainable(model, 0, std::min(config.unfreeze_first_n, model.backbone_len), true);
  run_phase(2, config.phase2_epochs);

  return history;
}

// ---- metrics CSV ----

inline const char* kMetricsHeader = "phase,epoch,train_loss,train_acc,val_loss,val_acc";

inline void write_metrics(const MetricsHistory& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << kMetricsHeader << "\n";
  char buf[160];
  for (const MetricsRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%zu,%.6f,%.6f,%.6f,%.6f", r.phase, r.epoch,
                  r.train_loss, r.train_acc, r.val_loss, r.val_acc);
    os << buf << "\n";
  }
  if (!os) throw Error("failed writing metrics to " + path);
}

inline MetricsHistory read_metrics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open metrics file " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw FormatError(path + ": bad metrics header, expected '" +
                      std::string(kMetricsHeader) + "'");
  }
  MetricsHistory history;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 6 fields, got " +
                        std::to_string(fields.size()));
    }
    try {
      MetricsRecord r;
      r.phase = std::stoi(fields[0]);
      r.epoch = static_cast<size_t>(std::stoul(fields[1]));
      r.train_loss = std::stod(fields[2]);
      r.train_acc = std::stod(fields[3]);
      r.val_loss = std::stod(fields[4]);
      r.val_acc = std::stod(fields[5]);
      history.push_back(r);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed numeric field");
    }
  }
  return history;
}

// ---- accuracy / loss curves ----

// One self-contained SVG: accuracy curves against the left axis (0..1),
// loss curves against the same pixel range scaled by the observed maximum,
// and a dashed vertical rule where the phase changes.
inline void emit_curves(const MetricsHistory& history, const std::string& path) {
  if (history.empty()) throw DataError("emit_curves: empty history");
  const double W = 720.0, H = 400.0;
  const double left = 56.0, right = 600.0, top = 32.0, bottom = 360.0;
  const size_t n = history.size();

  double loss_max = 1e-12;
  for (const MetricsRecord& r : history) {
    loss_max = std::max({loss_max, r.train_loss, r.val_loss});
  }

  const auto x_at = [&](size_t i) {
    if (n == 1) return (left + right) / 2.0;
    return left + (right - left) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  const auto y_unit = [&](double v) { return bottom - (bottom - top) * v; };

  const auto polyline = [&](const char* id, const char* color,
                            const std::function<double(const MetricsRecord&)>& get,
                            double scale) {
    std::ostringstream os;
    os << "  <polyline id=\"" << id << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    char pt[48];
    for (size_t i = 0; i < n; ++i) {
      std::snprintf(pt, sizeof(pt), "%s%.2f,%.2f", i ? " " : "", x_at(i),
                    y_unit(get(history[i]) / scale));
      os << pt;
    }
    os << "\"/>\n";
    return os.str();
  };

  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << " " << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "  <rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "  <line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
     << bottom << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << bottom << "\" stroke=\"black\"/>\n";

  size_t boundary = 0;
  for (size_t i = 1; i < n; ++i) {
    if (history[i].phase != history[0].phase) {
      boundary = i;
      break;
    }
  }
  if (boundary > 0) {
    const double bx = (x_at(boundary - 1) + x_at(boundary)) / 2.0;
    os << "  <line x1=\"" << bx << "\" y1=\"" << top << "\" x2=\"" << bx << "\" y2=\""
       << bottom << "\" stroke=\"gray\" stroke-dasharray=\"5 4\"/>\n";
    os << "  <text x=\"" << bx + 4 << "\" y=\"" << top + 12
       << "\" fill=\"gray\">phase 2</text>\n";
  }

  os << polyline("train_acc", "#1f77b4", [](const MetricsRecord& r) { return r.train_acc; }, 1.0);
  os << polyline("val_acc", "#ff7f0e", [](const MetricsRecord& r) { return r.val_acc; }, 1.0);
  os << polyline("train_loss", "#2ca02c", [](const MetricsRecord& r) { return r.train_loss; },
                 loss_max);
  os << polyline("val_loss", "#d62728", [](const MetricsRecord& r) { return r.val_loss; },
                 loss_max);

  const char* legend[4][2] = {{"train_acc", "#1f77b4"},
                              {"val_acc", "#ff7f0e"},
                              {"train_loss", "#2ca02c"},
                              {"val_loss", "#d62728"}};
  for (int i = 0; i < 4; ++i) {
    const double ly = top + 16.0 * i;
    os << "  <rect x=\"" << right + 6 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\""
       << legend[i][1] << "\"/>\n";
    os << "  <text x=\"" << right + 20 << "\" y=\"" << ly + 9 << "\">" << legend[i][0]
       << "</text>\n";
  }
  char lm[32];
  std::snprintf(lm, sizeof(lm), "%.3f", loss_max);
  os << "  <text x=\"4\" y=\"" << top + 4 << "\">1.0 / " << lm << "</text>\n";
  os << "  <text x=\"4\" y=\"" << bottom + 4 << "\">0</text>\n";
  os << "  <text x=\"" << (left + right) / 2.0 - 20 << "\" y=\"" << bottom + 28
     << "\">epoch</text>\n";
  os << "</svg>\n";
  if (!os) throw Error("failed writing curves to " + path);
}

}  // namespace statekit
