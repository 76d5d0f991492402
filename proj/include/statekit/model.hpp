#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "statekit/errors.hpp"
#include "statekit/nn.hpp"
#include "statekit/rng.hpp"
#include "statekit/tensor.hpp"

namespace statekit {

// Classifier head: two conv/batchnorm/leaky-relu blocks, dropout, dense.
struct HeadSpec {
  std::vector<size_t> conv_channels{32, 32};
  double leaky_slope = 0.01;
  double dropout_rate = 0.5;

  void validate() const {
    if (conv_channels.size() != 2) {
      throw DataError("head spec: exactly two conv blocks required, got " +
                      std::to_string(conv_channels.size()));
    }
    for (size_t c : conv_channels) {
      if (c == 0) throw DataError("head spec: conv channel count must be > 0");
    }
  }
};

// An ordered layer stack split into a backbone prefix and a head suffix.
// Copying clones every layer, so a copy trains independently.
struct ModelGraph {
  std::vector<std::unique_ptr<Layer>> layers;
  size_t backbone_len = 0;
  size_t num_classes = 0;
  size_t feature_dim = 0;
  size_t input_side = 0;

  ModelGraph() = default;
  ModelGraph(ModelGraph&&) = default;
  ModelGraph& operator=(ModelGraph&&) = default;

  ModelGraph(const ModelGraph& other)
      : backbone_len(other.backbone_len), num_classes(other.num_classes),
        feature_dim(other.feature_dim), input_side(other.input_side) {
    layers.reserve(other.layers.size());
    for (const auto& l : other.layers) layers.push_back(l->clone());
  }

  ModelGraph& operator=(const ModelGraph& other) {
    if (this != &other) {
      ModelGraph tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }

  Tensor forward(const Tensor& batch, Mode mode) {
    Tensor x = batch;
    for (auto& l : layers) x = l->forward(x, mode);
    return x;
  }

  Tensor backward(const Tensor& dlogits) {
    Tensor g = dlogits;
    for (size_t i = layers.size(); i-- > 0;) g = layers[i]->backward(g);
    return g;
  }

  void zero_grads() {
    for (auto& l : layers) l->zero_grads();
  }

  void step(double lr) {
    for (auto& l : layers) sgd_step(*l, lr);
  }

  std::vector<LayerKind> kinds() const {
    std::vector<LayerKind> out;
    out.reserve(layers.size());
    for (const auto& l : layers) out.push_back(l->kind());
    return out;
  }
};

inline void set_trainable(ModelGraph& model, size_t first, size_t count, bool flag) {
  if (first > model.layers.size() || count > model.layers.size() - first) {
    throw DimensionError("set_trainable: layer range [" + std::to_string(first) + "," +
                         std::to_string(first + count) + ") exceeds " +
                         std::to_string(model.layers.size()) + " layers");
  }
  for (size_t i = first; i < first + count; ++i) model.layers[i]->trainable = flag;
}

inline void set_all_trainable(ModelGraph& model, bool flag) {
  set_trainable(model, 0, model.layers.size(), flag);
}

// Three conv/leaky-relu/maxpool stages; each stage halves the spatial side,
// so the input side must be a positive multiple of 8. Channels 3 -> 8 -> 16
// -> 16, giving a (N,16,S/8,S/8) feature map.
inline std::vector<std::unique_ptr<Layer>> build_backbone(Rng& init_rng, size_t in_channels = 3,
                                                          double leaky_slope = 0.01) {
  const size_t chans[4] = {in_channels, 8, 16, 16};
  std::vector<std::unique_ptr<Layer>> out;
  for (size_t stage = 0; stage < 3; ++stage) {
    auto conv = std::make_unique<Conv2dLayer>(chans[stage], chans[stage + 1], 3, 1, 1);
    conv->init_he(init_rng);
    out.push_back(std::move(conv));
    out.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
    out.push_back(std::make_unique<MaxPoolLayer>(2, 2));
  }
  return out;
}

constexpr size_t kBackboneOutChannels = 16;
constexpr size_t kBackboneDownscale = 8;

inline void validate_model(const ModelGraph& model);

inline ModelGraph build_model(uint64_t seed, const HeadSpec& head = HeadSpec{},
                              size_t input_side = 32, size_t num_classes = 11) {
  head.validate();
  if (input_side == 0 || input_side % kBackboneDownscale != 0) {
    throw DataError("input side must be a positive multiple of " +
                    std::to_string(kBackboneDownscale) + ", got " +
                    std::to_string(input_side));
  }
  Rng init_rng(derive_seed(seed, "init", 0));
  ModelGraph model;
  model.layers = build_backbone(init_rng, 3, head.leaky_slope);
  model.backbone_len = model.layers.size();
  model.num_classes = num_classes;
  model.input_side = input_side;

  const size_t side = input_side / kBackboneDownscale;
  size_t in_ch = kBackboneOutChannels;
  for (size_t c : head.conv_channels) {
    auto conv = std::make_unique<Conv2dLayer>(in_ch, c, 3, 1, 1);
    conv->init_he(init_rng);
    model.layers.push_back(std::move(conv));
    model.layers.push_back(std::make_unique<BatchNormLayer>(c));
    model.layers.push_back(std::make_unique<LeakyReluLayer>(head.leaky_slope));
    in_ch = c;
  }
  model.layers.push_back(
      std::make_unique<DropoutLayer>(head.dropout_rate, derive_seed(seed, "dropout", 0)));
  model.feature_dim = in_ch * side * side;
  auto dense = std::make_unique<DenseLayer>(model.feature_dim, num_classes);
  dense->init_he(init_rng);
  model.layers.push_back(std::move(dense));
  validate_model(model);
  return model;
}

inline void validate_model(const ModelGraph& model) {
  if (model.backbone_len < 5) {
    throw StructureError("model: backbone must have at least 5 layers, got " +
                         std::to_string(model.backbone_len));
  }
  if (model.layers.size() < model.backbone_len + 8) {
    throw StructureError("model: head is missing layers");
  }
  static const LayerKind head_kinds[8] = {
      LayerKind::conv2d, LayerKind::batchnorm, LayerKind::leaky_relu,
      LayerKind::conv2d, LayerKind::batchnorm, LayerKind::leaky_relu,
      LayerKind::dropout, LayerKind::dense};
  const size_t head_start = model.layers.size() - 8;
  if (head_start != model.backbone_len) {
    throw StructureError("model: head must start right after the backbone");
  }
  for (size_t i = 0; i < 8; ++i) {
    if (model.layers[head_start + i]->kind() != head_kinds[i]) {
      throw StructureError(std::string("model: head layer ") + std::to_string(i) +
                           " is " + layer_kind_name(model.layers[head_start + i]->kind()) +
                           ", expected " + layer_kind_name(head_kinds[i]));
    }
  }
  const auto* dense = dynamic_cast<const DenseLayer*>(model.layers.back().get());
  if (dense->out_dim != model.num_classes) {
    throw StructureError("model: final dense width " + std::to_string(dense->out_dim) +
                         " does not match class count " + std::to_string(model.num_classes));
  }
  if (dense->in_dim != model.feature_dim) {
    throw StructureError("model: final dense input width does not match feature_dim");
  }
}

// Runs the first `at_layer` layers in inference mode and flattens the result
// to one row per sample. The default boundary is the input of the final
// dense layer.
inline Tensor extract_features(ModelGraph& model, const Tensor& batch,
                               size_t at_layer = static_cast<size_t>(-1)) {
  if (at_layer == static_cast<size_t>(-1)) at_layer = model.layers.size() - 1;
  if (at_layer > model.layers.size()) {
    throw DimensionError("extract_features: boundary " + std::to_string(at_layer) +
                         " exceeds layer count " + std::to_string(model.layers.size()));
  }
  Tensor x = batch;
  for (size_t i = 0; i < at_layer; ++i) x = model.layers[i]->forward(x, Mode::infer);
  const size_t N = x.dim(0);
  return x.reshaped({N, x.numel() / N});
}

}  // namespace statekit
