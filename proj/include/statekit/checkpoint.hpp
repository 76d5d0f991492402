#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "statekit/binio.hpp"
#include "statekit/errors.hpp"
#include "statekit/model.hpp"
#include "statekit/nn.hpp"

namespace statekit {

// Layer serialization shared by the classifier checkpoint and the GAN
// bundle. Each layer is stored as kind, trainable flag, a per-kind hyper
// list (f64) and its tensors as little-endian f32 blobs. Batchnorm running
// statistics are persisted alongside gamma/beta; dropout RNG state is not
// (callers reseed before training resumes).

inline std::vector<double> layer_hypers(const Layer& layer) {
  switch (layer.kind()) {
    case LayerKind::conv2d: {
      const auto& l = static_cast<const Conv2dLayer&>(layer);
      return {static_cast<double>(l.in_channels), static_cast<double>(l.out_channels),
              static_cast<double>(l.kernel), static_cast<double>(l.stride),
              static_cast<double>(l.pad)};
    }
    case LayerKind::batchnorm: {
      const auto& l = static_cast<const BatchNormLayer&>(layer);
      return {static_cast<double>(l.channels), l.epsilon, l.momentum};
    }
    case LayerKind::leaky_relu:
      return {static_cast<const LeakyReluLayer&>(layer).slope};
    case LayerKind::maxpool: {
      const auto& l = static_cast<const MaxPoolLayer&>(layer);
      return {static_cast<double>(l.window), static_cast<double>(l.stride)};
    }
    case LayerKind::dropout:
      return {static_cast<const DropoutLayer&>(layer).rate};
    case LayerKind::dense: {
      const auto& l = static_cast<const DenseLayer&>(layer);
      return {static_cast<double>(l.in_dim), static_cast<double>(l.out_dim)};
    }
    case LayerKind::upsample:
      return {static_cast<double>(static_cast<const UpsampleLayer&>(layer).factor)};
  }
  throw FormatError("unknown layer kind");
}

// Tensors that must survive a round trip, in a fixed order per kind.
inline std::vector<Tensor*> layer_tensors(Layer& layer) {
  switch (layer.kind()) {
    case LayerKind::conv2d: {
      auto& l = static_cast<Conv2dLayer&>(layer);
      return {&l.weight, &l.bias};
    }
    case LayerKind::batchnorm: {
      auto& l = static_cast<BatchNormLayer&>(layer);
      return {&l.gamma, &l.beta, &l.running_mean, &l.running_var};
    }
    case LayerKind::dense: {
      auto& l = static_cast<DenseLayer&>(layer);
      return {&l.weight, &l.bias};
    }
    default:
      return {};
  }
}

inline std::unique_ptr<Layer> make_layer(LayerKind kind, const std::vector<double>& h) {
  auto need = [&](size_t n) {
    if (h.size() != n) {
      throw FormatError(std::string("layer ") + layer_kind_name(kind) + " expects " +
                        std::to_string(n) + " hyperparameters, file has " +
                        std::to_string(h.size()));
    }
  };
  switch (kind) {
    case LayerKind::conv2d:
      need(5);
      return std::make_unique<Conv2dLayer>(
          static_cast<size_t>(h[0]), static_cast<size_t>(h[1]), static_cast<size_t>(h[2]),
          static_cast<size_t>(h[3]), static_cast<size_t>(h[4]));
    case LayerKind::batchnorm:
      need(3);
      return std::make_unique<BatchNormLayer>(static_cast<size_t>(h[0]), h[1], h[2]);
    case LayerKind::leaky_relu:
      need(1);
      return std::make_unique<LeakyReluLayer>(h[0]);
    case LayerKind::maxpool:
      need(2);
      return std::make_unique<MaxPoolLayer>(static_cast<size_t>(h[0]),
                                            static_cast<size_t>(h[1]));
    case LayerKind::dropout:
      need(1);
      return std::make_unique<DropoutLayer>(h[0]);
    case LayerKind::dense:
      need(2);
      return std::make_unique<DenseLayer>(static_cast<size_t>(h[0]),
                                          static_cast<size_t>(h[1]));
    case LayerKind::upsample:
      need(1);
      return std::make_unique<UpsampleLayer>(static_cast<size_t>(h[0]));
  }
  throw FormatError("unknown layer kind tag");
}

inline void write_layers(std::ostream& os, const std::vector<std::unique_ptr<Layer>>& layers) {
  write_u32(os, static_cast<uint32_t>(layers.size()));
  for (const auto& lp : layers) {
    Layer& layer = *lp;
    write_u8(os, static_cast<uint8_t>(layer.kind()));
    write_u8(os, layer.trainable ? 1 : 0);
    const std::vector<double> hypers = layer_hypers(layer);
    write_u8(os, static_cast<uint8_t>(hypers.size()));
    for (double h : hypers) write_f64(os, h);
    const std::vector<Tensor*> tensors = layer_tensors(layer);
    write_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) {
      write_u8(os, static_cast<uint8_t>(t->ndim()));
      for (size_t d : t->shape) write_u32(os, static_cast<uint32_t>(d));
      for (double v : t->data) write_f32(os, static_cast<float>(v));
    }
  }
}

inline std::vector<std::unique_ptr<Layer>> read_layers(std::istream& is) {
  const uint32_t count = read_u32(is);
  std::vector<std::unique_ptr<Layer>> layers;
  layers.reserve(count);
  for (uint32_t li = 0; li < count; ++li) {
    const uint8_t kind_tag = read_u8(is);
    if (kind_tag > static_cast<uint8_t>(LayerKind::upsample)) {
      throw FormatError("layer " + std::to_string(li) + ": unknown kind tag " +
                        std::to_string(kind_tag));
    }
    const uint8_t trainable = read_u8(is);
    if (trainable > 1) {
      throw FormatError("layer " + std::to_string(li) + ": trainable flag must be 0 or 1");
    }
    const uint8_t n_hyper = read_u8(is);
    std::vector<double> hypers(n_hyper);
    for (auto& h : hypers) h = read_f64(is);
    auto layer = make_layer(static_cast<LayerKind>(kind_tag), hypers);
    layer->trainable = trainable == 1;

    const std::vector<Tensor*> tensors = layer_tensors(*layer);
    const uint32_t n_tensors = read_u32(is);
    if (n_tensors != tensors.size()) {
      throw StructureError("layer " + std::to_string(li) + ": file has " +
                           std::to_string(n_tensors) + " tensors, " +
                           layer_kind_name(layer->kind()) + " stores " +
                           std::to_string(tensors.size()));
    }
    for (Tensor* t : tensors) {
      const uint8_t ndim = read_u8(is);
      std::vector<size_t> shape(ndim);
      for (auto& d : shape) d = read_u32(is);
      if (shape != t->shape) {
        throw StructureError("layer " + std::to_string(li) + ": tensor shape " +
                             Tensor::shape_string(shape) +
                             " does not match the layer hypers, expected " +
                             Tensor::shape_string(t->shape));
      }
      for (double& v : t->data) v = static_cast<double>(read_f32(is));
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

constexpr uint16_t kCheckpointVersion = 1;

inline void save_checkpoint(const ModelGraph& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write("SKCK", 4);
  write_u16(os, kCheckpointVersion);
  write_u32(os, static_cast<uint32_t>(model.backbone_len));
  write_u32(os, static_cast<uint32_t>(model.num_classes));
  write_u32(os, static_cast<uint32_t>(model.feature_dim));
  write_u32(os, static_cast<uint32_t>(model.input_side));
  write_layers(os, model.layers);
  if (!os) throw Error("failed writing checkpoint to " + path);
}

inline ModelGraph load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "SKCK") {
    throw FormatError(path + " is not a checkpoint file (bad magic)");
  }
  const uint16_t version = read_u16(is);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelGraph model;
  model.backbone_len = read_u32(is);
  model.num_classes = read_u32(is);
  model.feature_dim = read_u32(is);
  model.input_side = read_u32(is);
  model.layers = read_layers(is);
  validate_model(model);
  return model;
}

// Guards loading weights into a context that assumes a specific topology.
inline void require_same_structure(const ModelGraph& a, const ModelGraph& b) {
  if (a.layers.size() != b.layers.size()) {
    throw StructureError("model structures differ: " + std::to_string(a.layers.size()) +
                         " vs " + std::to_string(b.layers.size()) + " layers");
  }
  for (size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i]->kind() != b.layers[i]->kind()) {
      throw StructureError("model structures differ at layer " + std::to_string(i) + ": " +
                           layer_kind_name(a.layers[i]->kind()) + " vs " +
                           layer_kind_name(b.layers[i]->kind()));
    }
    if (layer_hypers(*a.layers[i]) != layer_hypers(*b.layers[i])) {
      throw StructureError("model structures differ at layer " + std::to_string(i) +
                           ": hyperparameters do not match");
    }
  }
  if (a.backbone_len != b.backbone_len || a.num_classes != b.num_classes ||
      a.feature_dim != b.feature_dim || a.input_side != b.input_side) {
    throw StructureError("model structures differ in graph metadata");
  }
}

}  // namespace statekit
