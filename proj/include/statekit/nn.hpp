#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "statekit/errors.hpp"
#include "statekit/rng.hpp"
#include "statekit/tensor.hpp"

namespace statekit {

enum class Mode { train, infer };

enum class LayerKind : uint8_t {
  conv2d = 0,
  batchnorm = 1,
  leaky_relu = 2,
  maxpool = 3,
  dropout = 4,
  dense = 5,
  upsample = 6,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::dropout: return "dropout";
    case LayerKind::dense: return "dense";
    case LayerKind::upsample: return "upsample";
  }
  return "?";
}

// A layer owns its parameters (each an optionally-gradded Tensor) and a
// forward cache. Backward accumulates into param .grad buffers and returns
// the input gradient; it consumes the cache left by the latest train-mode
// forward. Inference-mode forwards never touch caches, parameters or
// running statistics. sgd_step skips layers whose trainable flag is false,
// but gradients still flow through them.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;

  bool trainable = true;

  void zero_grads() {
    for (Tensor* p : params()) p->zero_grad();
  }

 protected:
  [[noreturn]] void missing_cache() const {
    throw Error(std::string(layer_kind_name(kind())) +
                ": backward called without a forward cache");
  }
};

// ---- conv2d ----

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(size_t in_ch, size_t out_ch, size_t kernel, size_t stride = 1, size_t pad = 0)
      : in_channels(in_ch), out_channels(out_ch), kernel(kernel), stride(stride), pad(pad),
        weight({out_ch, in_ch, kernel, kernel}), bias({out_ch}) {
    if (kernel == 0 || stride == 0) throw DimensionError("conv2d: kernel and stride must be > 0");
  }

  LayerKind kind() const override { return LayerKind::conv2d; }

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_channels * kernel * kernel));
    for (double& v : weight.data) v = rng.normal(0.0, std);
    for (double& v : bias.data) v = 0.0;
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    require_ndim(x, 4, "conv2d");
    if (x.dim(1) != in_channels) {
      throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) +
                           " channels on axis 1, layer expects " + std::to_string(in_channels));
    }
    const size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    if (H + 2 * pad < kernel || W + 2 * pad < kernel) {
      throw DimensionError("conv2d: kernel " + std::to_string(kernel) +
                           " does not fit input " + Tensor::shape_string(x.shape) +
                           " with pad " + std::to_string(pad));
    }
    const size_t Ho = (H + 2 * pad - kernel) / stride + 1;
    const size_t Wo = (W + 2 * pad - kernel) / stride + 1;
    Tensor y({N, out_channels, Ho, Wo});
    const int ip = static_cast<int>(pad);
    for (size_t n = 0; n < N; ++n) {
      for (size_t o = 0; o < out_channels; ++o) {
        for (size_t i = 0; i < Ho; ++i) {
          for (size_t j = 0; j < Wo; ++j) {
            double acc = bias.data[o];
            for (size_t c = 0; c < in_channels; ++c) {
              for (size_t u = 0; u < kernel; ++u) {
                const int hy = static_cast<int>(i * stride + u) - ip;
                if (hy < 0 || hy >= static_cast<int>(H)) continue;
                for (size_t v = 0; v < kernel; ++v) {
                  const int wx = static_cast<int>(j * stride + v) - ip;
                  if (wx < 0 || wx >= static_cast<int>(W)) continue;
                  acc += weight.at4(o, c, u, v) * x.at4(n, c, hy, wx);
                }
              }
            }
            y.at4(n, o, i, j) = acc;
          }
        }
      }
    }
    if (mode == Mode::train) cache_ = x;
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (cache_.numel() == 0) missing_cache();
    const Tensor x = std::move(cache_);
    cache_ = Tensor();
    const size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    const size_t Ho = dy.dim(2), Wo = dy.dim(3);
    weight.ensure_grad();
    bias.ensure_grad();
    Tensor dx(x.shape);
    const int ip = static_cast<int>(pad);
    for (size_t n = 0; n < N; ++n) {
      for (size_t o = 0; o < out_channels; ++o) {
        for (size_t i = 0; i < Ho; ++i) {
          for (size_t j = 0; j < Wo; ++j) {
            const double g = dy.at4(n, o, i, j);
            if (g == 0.0) continue;
            bias.grad[o] += g;
            for (size_t c = 0; c < in_channels; ++c) {
              for (size_t u = 0; u < kernel; ++u) {
                const int hy = static_cast<int>(i * stride + u) - ip;
                if (hy < 0 || hy >= static_cast<int>(H)) continue;
                for (size_t v = 0; v < kernel; ++v) {
                  const int wx = static_cast<int>(j * stride + v) - ip;
                  if (wx < 0 || wx >= static_cast<int>(W)) continue;
                  weight.grad[((o * in_channels + c) * kernel + u) * kernel + v] +=
                      x.at4(n, c, hy, wx) * g;
                  dx.at4(n, c, hy, wx) += weight.at4(o, c, u, v) * g;
                }
              }
            }
          }
        }
      }
    }
    return dx;
  }

  std::vector<Tensor*> params() override { return {&weight, &bias}; }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2dLayer>(*this); }

  size_t in_channels, out_channels, kernel, stride, pad;
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]

 private:
  Tensor cache_;
};

// ---- batchnorm ----

// Normalizes per channel: axis 1 of a 4-d NCHW input, or each column of a
// 2-d input. Train mode uses batch statistics and updates the running
// estimates with momentum; inference (and a frozen layer, even in train
// mode) uses the running estimates and leaves them untouched.
class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(size_t channels, double epsilon = 1e-5, double momentum = 0.9)
      : channels(channels), epsilon(epsilon), momentum(momentum),
        gamma({channels}, 1.0), beta({channels}, 0.0),
        running_mean({channels}, 0.0), running_var({channels}, 1.0) {}

  LayerKind kind() const override { return LayerKind::batchnorm; }

  Tensor forward(const Tensor& x, Mode mode) override {
    check_shape(x);
    const bool use_batch_stats = mode == Mode::train && trainable;
    if (mode == Mode::train && x.dim(0) < 2) {
      throw DataError("batchnorm: train mode needs batch size >= 2, got " +
                      std::to_string(x.dim(0)));
    }
    std::vector<double> mean(channels), var(channels);
    if (use_batch_stats) {
      channel_stats(x, &mean, &var);
      for (size_t c = 0; c < channels; ++c) {
        running_mean.data[c] = momentum * running_mean.data[c] + (1.0 - momentum) * mean[c];
        running_var.data[c] = momentum * running_var.data[c] + (1.0 - momentum) * var[c];
      }
    } else {
      mean.assign(running_mean.data.begin(), running_mean.data.end());
      var.assign(running_var.data.begin(), running_var.data.end());
    }
    Tensor y(x.shape);
    std::vector<double> inv_std(channels);
    for (size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + epsilon);
    for_each_value(x, [&](size_t c, size_t flat) {
      y.data[flat] = gamma.data[c] * (x.data[flat] - mean[c]) * inv_std[c] + beta.data[c];
    });
    if (mode == Mode::train) {
      cache_x_ = x;
      cache_mean_ = mean;
      cache_inv_std_ = inv_std;
      cache_batch_stats_ = use_batch_stats;
      has_cache_ = true;
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (!has_cache_) missing_cache();
    has_cache_ = false;
    const Tensor x = std::move(cache_x_);
    cache_x_ = Tensor();
    gamma.ensure_grad();
    beta.ensure_grad();
    Tensor dx(x.shape);
    const double m = static_cast<double>(count_per_channel(x));

    std::vector<double> sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
    for_each_value(x, [&](size_t c, size_t flat) {
      const double xhat = (x.data[flat] - cache_mean_[c]) * cache_inv_std_[c];
      sum_dy[c] += dy.data[flat];
      sum_dy_xhat[c] += dy.data[flat] * xhat;
    });
    for (size_t c = 0; c < channels; ++c) {
      beta.grad[c] += sum_dy[c];
      gamma.grad[c] += sum_dy_xhat[c];
    }

    if (cache_batch_stats_) {
      // full backprop through the batch statistics
      for_each_value(x, [&](size_t c, size_t flat) {
        const double xhat = (x.data[flat] - cache_mean_[c]) * cache_inv_std_[c];
        dx.data[flat] = gamma.data[c] * cache_inv_std_[c] / m *
                        (m * dy.data[flat] - sum_dy[c] - xhat * sum_dy_xhat[c]);
      });
    } else {
      // running statistics are constants
      for_each_value(x, [&](size_t c, size_t flat) {
        dx.data[flat] = dy.data[flat] * gamma.data[c] * cache_inv_std_[c];
      });
    }
    return dx;
  }

  std::vector<Tensor*> params() override { return {&gamma, &beta}; }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNormLayer>(*this); }

  size_t channels;
  double epsilon;
  double momentum;
  Tensor gamma, beta;
  Tensor running_mean, running_var;  // state, not optimized

 private:
  void check_shape(const Tensor& x) const {
    if (x.ndim() == 4) {
      if (x.dim(1) != channels) {
        throw DimensionError("batchnorm: axis 1 has " + std::to_string(x.dim(1)) +
                             " channels, layer expects " + std::to_string(channels));
      }
    } else if (x.ndim() == 2) {
      if (x.dim(1) != channels) {
        throw DimensionError("batchnorm: axis 1 has " + std::to_string(x.dim(1)) +
                             " features, layer expects " + std::to_string(channels));
      }
    } else {
      throw DimensionError("batchnorm expects a 2-d or 4-d tensor, got " +
                           Tensor::shape_string(x.shape));
    }
  }

  size_t count_per_channel(const Tensor& x) const {
    return x.ndim() == 4 ? x.dim(0) * x.dim(2) * x.dim(3) : x.dim(0);
  }

  template <typename F>
  void for_each_value(const Tensor& x, F&& fn) const {
    if (x.ndim() == 4) {
      const size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
      for (size_t n = 0; n < N; ++n) {
        for (size_t c = 0; c < C; ++c) {
          const size_t base = (n * C + c) * HW;
          for (size_t i = 0; i < HW; ++i) fn(c, base + i);
        }
      }
    } else {
      const size_t N = x.dim(0), C = x.dim(1);
      for (size_t n = 0; n < N; ++n) {
        for (size_t c = 0; c < C; ++c) fn(c, n * C + c);
      }
    }
  }

  void channel_stats(const Tensor& x, std::vector<double>* mean, std::vector<double>* var) const {
    const double m = static_cast<double>(count_per_channel(x));
    std::fill(mean->begin(), mean->end(), 0.0);
    std::fill(var->begin(), var->end(), 0.0);
    for_each_value(x, [&](size_t c, size_t flat) { (*mean)[c] += x.data[flat]; });
    for (double& v : *mean) v /= m;
    for_each_value(x, [&](size_t c, size_t flat) {
      const double d = x.data[flat] - (*mean)[c];
      (*var)[c] += d * d;
    });
    for (double& v : *var) v /= m;  // biased variance, also used for the running estimate
  }

  Tensor cache_x_;
  std::vector<double> cache_mean_, cache_inv_std_;
  bool cache_batch_stats_ = false;
  bool has_cache_ = false;
};

// ---- leaky relu ----

class LeakyReluLayer : public Layer {
 public:
  explicit LeakyReluLayer(double slope = 0.01) : slope(slope) {
    if (slope < 0.0 || slope >= 1.0) throw DataError("leaky_relu: slope must be in [0, 1)");
  }

  LayerKind kind() const override { return LayerKind::leaky_relu; }

  Tensor forward(const Tensor& x, Mode mode) override {
    Tensor y(x.shape);
    for (size_t i = 0; i < x.numel(); ++i) {
      y.data[i] = x.data[i] > 0.0 ? x.data[i] : slope * x.data[i];
    }
    if (mode == Mode::train) cache_ = x;
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (cache_.numel() == 0) missing_cache();
    const Tensor x = std::move(cache_);
    cache_ = Tensor();
    Tensor dx(x.shape);
    // subgradient at exactly 0 is the slope
    for (size_t i = 0; i < x.numel(); ++i) {
      dx.data[i] = dy.data[i] * (x.data[i] > 0.0 ? 1.0 : slope);
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<LeakyReluLayer>(*this); }

  double slope;

 private:
  Tensor cache_;
};

// ---- maxpool ----

class MaxPoolLayer : public Layer {
 public:
  explicit MaxPoolLayer(size_t window = 2, size_t stride = 2) : window(window), stride(stride) {
    if (window == 0 || stride == 0) throw DimensionError("maxpool: window and stride must be > 0");
  }

  LayerKind kind() const override { return LayerKind::maxpool; }

  Tensor forward(const Tensor& x, Mode mode) override {
    require_ndim(x, 4, "maxpool");
    const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (window > H || window > W) {
      throw DimensionError("maxpool: window " + std::to_string(window) +
                           " larger than input " + Tensor::shape_string(x.shape));
    }
    const size_t Ho = (H - window) / stride + 1;
    const size_t Wo = (W - window) / stride + 1;
    Tensor y({N, C, Ho, Wo});
    std::vector<size_t> argmax(y.numel());
    size_t out = 0;
    for (size_t n = 0; n < N; ++n) {
      for (size_t c = 0; c < C; ++c) {
        for (size_t i = 0; i < Ho; ++i) {
          for (size_t j = 0; j < Wo; ++j, ++out) {
            double best = -std::numeric_limits<double>::infinity();
            size_t best_at = 0;
            for (size_t u = 0; u < window; ++u) {
              for (size_t v = 0; v < window; ++v) {
                const size_t flat =
                    ((n * C + c) * H + i * stride + u) * W + j * stride + v;
                if (x.data[flat] > best) {  // strict: first occurrence wins ties
                  best = x.data[flat];
                  best_at = flat;
                }
              }
            }
            y.data[out] = best;
            argmax[out] = best_at;
          }
        }
      }
    }
    if (mode == Mode::train) {
      cache_argmax_ = std::move(argmax);
      cache_in_shape_ = x.shape;
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (cache_in_shape_.empty()) missing_cache();
    Tensor dx(cache_in_shape_);
    for (size_t i = 0; i < dy.numel(); ++i) dx.data[cache_argmax_[i]] += dy.data[i];
    cache_argmax_.clear();
    cache_in_shape_.clear();
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }

  size_t window, stride;

 private:
  std::vector<size_t> cache_argmax_;
  std::vector<size_t> cache_in_shape_;
};

// ---- dropout ----

// Inverted dropout: surviving activations are scaled by 1/(1-rate) at train
// time, so inference is exactly the identity and consumes no randomness.
class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double rate = 0.5, uint64_t seed = 0) : rate(rate), rng_(seed) {
    if (rate < 0.0 || rate >= 1.0) throw DataError("dropout: rate must be in [0, 1)");
  }

  LayerKind kind() const override { return LayerKind::dropout; }

  void reseed(uint64_t seed) { rng_ = Rng(seed); }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (mode == Mode::infer || rate == 0.0) {
      if (mode == Mode::train) cache_state_ = CacheState::identity;
      return x;
    }
    const double keep = 1.0 - rate;
    Tensor y(x.shape);
    cache_mask_.assign(x.numel(), 0.0);
    for (size_t i = 0; i < x.numel(); ++i) {
      if (rng_.uniform() >= rate) {
        cache_mask_[i] = 1.0 / keep;
        y.data[i] = x.data[i] / keep;
      }
    }
    cache_state_ = CacheState::mask;
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (cache_state_ == CacheState::none) missing_cache();
    if (cache_state_ == CacheState::identity) {
      cache_state_ = CacheState::none;
      return dy;
    }
    Tensor dx(dy.shape);
    for (size_t i = 0; i < dy.numel(); ++i) dx.data[i] = dy.data[i] * cache_mask_[i];
    cache_state_ = CacheState::none;
    cache_mask_.clear();
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }

  double rate;

 private:
  enum class CacheState { none, identity, mask };
  Rng rng_;
  std::vector<double> cache_mask_;
  CacheState cache_state_ = CacheState::none;
};

// ---- dense ----

// Fully connected y = xW + b. Inputs with more than two dimensions are
// flattened to [N, rest] first and the input gradient is reshaped back.
class DenseLayer : public Layer {
 public:
  DenseLayer(size_t in_dim, size_t out_dim)
      : in_dim(in_dim), out_dim(out_dim), weight({in_dim, out_dim}), bias({out_dim}) {}

  LayerKind kind() const override { return LayerKind::dense; }

  void init_he(Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (double& v : weight.data) v = rng.normal(0.0, std);
    for (double& v : bias.data) v = 0.0;
  }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.ndim() < 2) throw DimensionError("dense expects at least 2 dimensions");
    const size_t N = x.dim(0);
    const size_t D = x.numel() / N;
    if (D != in_dim) {
      throw DimensionError("dense: input width " + std::to_string(D) +
                           " does not match weight rows " + std::to_string(in_dim));
    }
    Tensor y({N, out_dim});
    for (size_t n = 0; n < N; ++n) {
      for (size_t m = 0; m < out_dim; ++m) {
        double acc = bias.data[m];
        const size_t xb = n * in_dim;
        for (size_t d = 0; d < in_dim; ++d) acc += x.data[xb + d] * weight.at2(d, m);
        y.at2(n, m) = acc;
      }
    }
    if (mode == Mode::train) {
      cache_ = x;
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (cache_.numel() == 0) missing_cache();
    const Tensor x = std::move(cache_);
    cache_ = Tensor();
    const size_t N = x.dim(0);
    weight.ensure_grad();
    bias.ensure_grad();
    Tensor dx(x.shape);
    for (size_t n = 0; n < N; ++n) {
      const size_t xb = n * in_dim;
      for (size_t m = 0; m < out_dim; ++m) {
        const double g = dy.at2(n, m);
        bias.grad[m] += g;
        for (size_t d = 0; d < in_dim; ++d) {
          weight.grad[d * out_dim + m] += x.data[xb + d] * g;
          dx.data[xb + d] += weight.at2(d, m) * g;
        }
      }
    }
    return dx;
  }

  std::vector<Tensor*> params() override { return {&weight, &bias}; }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

  size_t in_dim, out_dim;
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

 private:
  Tensor cache_;
};

// ---- nearest-neighbor upsample ----

class UpsampleLayer : public Layer {
 public:
  explicit UpsampleLayer(size_t factor = 2) : factor(factor) {
    if (factor == 0) throw DimensionError("upsample: factor must be > 0");
  }

  LayerKind kind() const override { return LayerKind::upsample; }

  Tensor forward(const Tensor& x, Mode mode) override {
    require_ndim(x, 4, "upsample");
    const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor y({N, C, H * factor, W * factor});
    for (size_t n = 0; n < N; ++n) {
      for (size_t c = 0; c < C; ++c) {
        for (size_t i = 0; i < H * factor; ++i) {
          for (size_t j = 0; j < W * factor; ++j) {
            y.at4(n, c, i, j) = x.at4(n, c, i / factor, j / factor);
          }
        }
      }
    }
    if (mode == Mode::train) cache_in_shape_ = x.shape;
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    if (cache_in_shape_.empty()) missing_cache();
    Tensor dx(cache_in_shape_);
    const size_t N = dx.dim(0), C = dx.dim(1);
    const size_t Ho = dy.dim(2), Wo = dy.dim(3);
    for (size_t n = 0; n < N; ++n) {
      for (size_t c = 0; c < C; ++c) {
        for (size_t i = 0; i < Ho; ++i) {
          for (size_t j = 0; j < Wo; ++j) {
            dx.at4(n, c, i / factor, j / factor) += dy.at4(n, c, i, j);
          }
        }
      }
    }
    cache_in_shape_.clear();
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<UpsampleLayer>(*this); }

  size_t factor;

 private:
  std::vector<size_t> cache_in_shape_;
};

// ---- softmax cross-entropy ----

inline Tensor softmax(const Tensor& logits) {
  require_ndim(logits, 2, "softmax");
  const size_t N = logits.dim(0), K = logits.dim(1);
  Tensor p(logits.shape);
  for (size_t n = 0; n < N; ++n) {
    double mx = logits.at2(n, 0);
    for (size_t k = 1; k < K; ++k) mx = std::max(mx, logits.at2(n, k));
    double z = 0.0;
    for (size_t k = 0; k < K; ++k) z += std::exp(logits.at2(n, k) - mx);
    for (size_t k = 0; k < K; ++k) p.at2(n, k) = std::exp(logits.at2(n, k) - mx) / z;
  }
  return p;
}

// Mean cross-entropy over the batch with the max-shifted softmax; the
// returned gradient is (softmax - onehot)/N.
inline std::pair<double, Tensor> softmax_cross_entropy(const Tensor& logits,
                                                       const std::vector<int>& labels) {
  require_ndim(logits, 2, "softmax_cross_entropy");
  const size_t N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(N));
  }
  for (int label : labels) {
    if (label < 0 || static_cast<size_t>(label) >= K) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(label) +
                      " outside [0," + std::to_string(K - 1) + "]");
    }
  }
  double loss = 0.0;
  Tensor grad(logits.shape);
  for (size_t n = 0; n < N; ++n) {
    double mx = logits.at2(n, 0);
    for (size_t k = 1; k < K; ++k) mx = std::max(mx, logits.at2(n, k));
    double z = 0.0;
    for (size_t k = 0; k < K; ++k) z += std::exp(logits.at2(n, k) - mx);
    const double lse = mx + std::log(z);
    loss += lse - logits.at2(n, static_cast<size_t>(labels[n]));
    for (size_t k = 0; k < K; ++k) {
      const double p = std::exp(logits.at2(n, k) - lse);
      grad.at2(n, k) = (p - (static_cast<size_t>(labels[n]) == k ? 1.0 : 0.0)) /
                       static_cast<double>(N);
    }
  }
  return {loss / static_cast<double>(N), std::move(grad)};
}

// ---- optimizer ----

inline void sgd_update(Tensor& param, double lr) {
  if (param.grad.empty()) return;
  if (param.grad.size() != param.data.size()) {
    throw DimensionError("sgd: gradient size does not match parameter size");
  }
  for (size_t i = 0; i < param.data.size(); ++i) param.data[i] -= lr * param.grad[i];
}

inline void sgd_step(Layer& layer, double lr) {
  if (!layer.trainable) return;
  for (Tensor* p : layer.params()) sgd_update(*p, lr);
}

inline void sgd_step(std::vector<std::unique_ptr<Layer>>& layers, double lr) {
  for (auto& l : layers) sgd_step(*l, lr);
}

// ---- finite differences ----

// Central-difference check of an analytic gradient of a scalar function.
// Error is relative to the gradient scale, floored at 1 so near-zero entries
// are compared absolutely.
inline double finite_diff_max_rel_error(const std::function<double(const Tensor&)>& f,
                                        const Tensor& x, const Tensor& analytic_grad,
                                        double h = 1e-5) {
  if (!x.same_shape(analytic_grad)) {
    throw DimensionError("finite_diff: gradient shape does not match input");
  }
  Tensor probe = x;
  double worst = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) {
    const double keep = probe.data[i];
    probe.data[i] = keep + h;
    const double fp = f(probe);
    probe.data[i] = keep - h;
    const double fm = f(probe);
    probe.data[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    const double an = analytic_grad.data[i];
    const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

}  // namespace statekit
