#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "statekit/binio.hpp"
#include "statekit/checkpoint.hpp"
#include "statekit/errors.hpp"
#include "statekit/image.hpp"
#include "statekit/nn.hpp"
#include "statekit/rng.hpp"
#include "statekit/tensor.hpp"

namespace statekit {

struct GanConfig {
  size_t image_side = 32;
  double cycle_lambda = 10.0;
  double lr = 0.005;
  size_t steps = 1000;
  size_t batch_size = 4;
  uint64_t seed = 0;

  void validate() const {
    if (image_side != 16 && image_side != 32 && image_side != 64 && image_side != 128) {
      throw DataError("gan config: image side must be 16, 32, 64 or 128, got " +
                      std::to_string(image_side));
    }
    if (cycle_lambda < 0.0) throw DataError("gan config: cycle lambda must be >= 0");
    if (lr <= 0.0) throw DataError("gan config: learning rate must be > 0");
    if (batch_size == 0) throw DataError("gan config: batch size must be > 0");
  }
};

// A plain layer stack, optionally wrapped as a residual map y = x + net(x).
// No batchnorm anywhere, so batches of one are fine.
struct GanNet {
  std::vector<std::unique_ptr<Layer>> layers;
  bool residual = false;

  GanNet() = default;
  GanNet(GanNet&&) = default;
  GanNet& operator=(GanNet&&) = default;

  GanNet(const GanNet& other) : residual(other.residual) {
    layers.reserve(other.layers.size());
    for (const auto& l : other.layers) layers.push_back(l->clone());
  }

  GanNet& operator=(const GanNet& other) {
    if (this != &other) {
      GanNet tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor h = x;
    for (auto& l : layers) h = l->forward(h, mode);
    if (residual) {
      if (!h.same_shape(x)) {
        throw DimensionError("residual net changed shape from " +
                             Tensor::shape_string(x.shape) + " to " +
                             Tensor::shape_string(h.shape));
      }
      for (size_t i = 0; i < h.numel(); ++i) h.data[i] += x.data[i];
    }
    return h;
  }

  Tensor backward(const Tensor& dy) {
    Tensor g = dy;
    for (size_t i = layers.size(); i-- > 0;) g = layers[i]->backward(g);
    if (residual) {
      for (size_t i = 0; i < g.numel(); ++i) g.data[i] += dy.data[i];
    }
    return g;
  }

  void zero_grads() {
    for (auto& l : layers) l->zero_grads();
  }

  void step(double lr) {
    for (auto& l : layers) sgd_step(*l, lr);
  }
};

struct GanBundle {
  GanNet G;   // X -> Y
  GanNet F;   // Y -> X
  GanNet Dx;  // scores X-domain images
  GanNet Dy;  // scores Y-domain images
  GanConfig config;
};

// Encoder-decoder residual generator: two stride-2 stages down, two
// nearest-neighbor upsample stages back. The final conv starts at 1/10 He
// scale so the residual map begins close to (but not exactly at) identity.
inline GanNet build_generator(Rng& rng, double leaky_slope = 0.2) {
  GanNet net;
  net.residual = true;
  const auto conv = [&](size_t in, size_t out, size_t stride) {
    auto c = std::make_unique<Conv2dLayer>(in, out, 3, stride, 1);
    c->init_he(rng);
    net.layers.push_back(std::move(c));
  };
  conv(3, 8, 1);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  conv(8, 16, 2);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  conv(16, 16, 2);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  net.layers.push_back(std::make_unique<UpsampleLayer>(2));
  conv(16, 8, 1);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  net.layers.push_back(std::make_unique<UpsampleLayer>(2));
  conv(8, 8, 1);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  auto last = std::make_unique<Conv2dLayer>(8, 3, 3, 1, 1);
  last->init_he(rng);
  for (double& w : last->weight.data) w *= 0.1;
  net.layers.push_back(std::move(last));
  return net;
}

// Three stride-2 convs ending in a one-channel patch score map.
inline GanNet build_discriminator(Rng& rng, double leaky_slope = 0.2) {
  GanNet net;
  const auto conv = [&](size_t in, size_t out) {
    auto c = std::make_unique<Conv2dLayer>(in, out, 3, 2, 1);
    c->init_he(rng);
    net.layers.push_back(std::move(c));
  };
  conv(3, 8);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  conv(8, 16);
  net.layers.push_back(std::make_unique<LeakyReluLayer>(leaky_slope));
  conv(16, 1);
  return net;
}

// Substream layout under the "gan" stream: 0..3 initialize G, F, Dx, Dy;
// 4+step draws the per-step batch indices.
inline GanBundle build_gan(const GanConfig& config) {
  config.validate();
  GanBundle bundle;
  bundle.config = config;
  Rng g_rng(derive_seed(config.seed, "gan", 0));
  Rng f_rng(derive_seed(config.seed, "gan", 1));
  Rng dx_rng(derive_seed(config.seed, "gan", 2));
  Rng dy_rng(derive_seed(config.seed, "gan", 3));
  bundle.G = build_generator(g_rng);
  bundle.F = build_generator(f_rng);
  bundle.Dx = build_discriminator(dx_rng);
  bundle.Dy = build_discriminator(dy_rng);
  return bundle;
}

// ---- losses ----

// Least-squares adversarial pair: loss_d = mean((d_real-1)^2 + d_fake^2)/2,
// loss_g = mean((d_fake-1)^2).
inline std::pair<double, double> adversarial_loss(const Tensor& d_real, const Tensor& d_fake) {
  if (!d_real.same_shape(d_fake)) {
    throw DimensionError("adversarial_loss: real and fake score shapes differ");
  }
  const double m = static_cast<double>(d_real.numel());
  double loss_d = 0.0, loss_g = 0.0;
  for (size_t i = 0; i < d_real.numel(); ++i) {
    const double r = d_real.data[i], f = d_fake.data[i];
    loss_d += ((r - 1.0) * (r - 1.0) + f * f) / 2.0;
    loss_g += (f - 1.0) * (f - 1.0);
  }
  return {loss_d / m, loss_g / m};
}

inline double cycle_loss(const Tensor& x, const Tensor& x_cycled) {
  if (!x.same_shape(x_cycled)) {
    throw DimensionError("cycle_loss: shapes " + Tensor::shape_string(x.shape) + " and " +
                         Tensor::shape_string(x_cycled.shape) + " differ");
  }
  double sum = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) sum += std::abs(x.data[i] - x_cycled.data[i]);
  return sum / static_cast<double>(x.numel());
}

struct LossRecord {
  size_t step = 0;  // 1-based
  double d_x = 0.0, d_y = 0.0, adv_g = 0.0, adv_f = 0.0, cycle = 0.0;
};

namespace detail {

inline Tensor concat_batches(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2), a.dim(3)});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

// One discriminator update on a concatenated real+fake batch; returns loss_d.
inline double update_discriminator(GanNet& d, const Tensor& real, const Tensor& fake,
                                   double lr) {
  const Tensor joint = concat_batches(real, fake);
  const Tensor scores = d.forward(joint, Mode::train);
  const size_t half = scores.numel() / 2;
  const double m = static_cast<double>(half);
  double loss = 0.0;
  Tensor grad(scores.shape);
  for (size_t i = 0; i < half; ++i) {
    const double r = scores.data[i];
    loss += (r - 1.0) * (r - 1.0) / 2.0;
    grad.data[i] = (r - 1.0) / m;
  }
  for (size_t i = half; i < scores.numel(); ++i) {
    const double f = scores.data[i];
    loss += f * f / 2.0;
    grad.data[i] = f / m;
  }
  d.zero_grads();
  d.backward(grad);
  d.step(lr);
  return loss / m;
}

inline Tensor cycle_grad(const Tensor& cycled, const Tensor& target, double scale) {
  Tensor g(cycled.shape);
  const double m = static_cast<double>(cycled.numel());
  for (size_t i = 0; i < cycled.numel(); ++i) {
    const double d = cycled.data[i] - target.data[i];
    g.data[i] = d > 0.0 ? scale / m : (d < 0.0 ? -scale / m : 0.0);
  }
  return g;
}

inline Tensor fool_grad(const Tensor& scores) {
  Tensor g(scores.shape);
  const double m = static_cast<double>(scores.numel());
  for (size_t i = 0; i < scores.numel(); ++i) {
    g.data[i] = 2.0 * (scores.data[i] - 1.0) / m;
  }
  return g;
}

inline double mean_sq_to_one(const Tensor& scores) {
  double s = 0.0;
  for (double v : scores.data) s += (v - 1.0) * (v - 1.0);
  return s / static_cast<double>(scores.numel());
}

}  // namespace detail

// One alternating update. Discriminators first, each on a real+detached-fake
// batch; then both generators on adversarial + lambda * cycle terms. Each
// net's forwards and backwards are strictly nested so single-slot layer
// caches suffice; generator gradients from the two directions accumulate
// before one SGD step per net. The reported cycle value is the unweighted
// sum of both directions.
inline LossRecord gan_train_step(GanBundle& bundle, const Tensor& batch_x,
                                 const Tensor& batch_y, size_t step_index) {
  const double lr = bundle.config.lr;
  const double lambda = bundle.config.cycle_lambda;
  LossRecord rec;
  rec.step = step_index + 1;

  {
    const Tensor fake_y = bundle.G.forward(batch_x, Mode::infer);
    const Tensor fake_x = bundle.F.forward(batch_y, Mode::infer);
    rec.d_y = detail::update_discriminator(bundle.Dy, batch_y, fake_y, lr);
    rec.d_x = detail::update_discriminator(bundle.Dx, batch_x, fake_x, lr);
  }

  bundle.G.zero_grads();
  bundle.F.zero_grads();

  // direction X -> Y -> X
  {
    const Tensor gx = bundle.G.forward(batch_x, Mode::train);
    const Tensor dy_scores = bundle.Dy.forward(gx, Mode::train);
    rec.adv_g = detail::mean_sq_to_one(dy_scores);
    bundle.Dy.zero_grads();
    const Tensor dgx_adv = bundle.Dy.backward(detail::fool_grad(dy_scores));
    const Tensor fgx = bundle.F.forward(gx, Mode::train);
    const double cyc1 = cycle_loss(batch_x, fgx);
    const Tensor dgx_cyc = bundle.F.backward(detail::cycle_grad(fgx, batch_x, lambda));
    Tensor dgx = dgx_adv;
    for (size_t i = 0; i < dgx.numel(); ++i) dgx.data[i] += dgx_cyc.data[i];
    bundle.G.backward(dgx);
    rec.cycle += cyc1;
  }

  // direction Y -> X -> Y
  {
    const Tensor fy = bundle.F.forward(batch_y, Mode::train);
    const Tensor dx_scores = bundle.Dx.forward(fy, Mode::train);
    rec.adv_f = detail::mean_sq_to_one(dx_scores);
    bundle.Dx.zero_grads();
    const Tensor dfy_adv = bundle.Dx.backward(detail::fool_grad(dx_scores));
    const Tensor gfy = bundle.G.forward(fy, Mode::train);
    const double cyc2 = cycle_loss(batch_y, gfy);
    const Tensor dfy_cyc = bundle.G.backward(detail::cycle_grad(gfy, batch_y, lambda));
    Tensor dfy = dfy_adv;
    for (size_t i = 0; i < dfy.numel(); ++i) dfy.data[i] += dfy_cyc.data[i];
    bundle.F.backward(dfy);
    rec.cycle += cyc2;
  }

  bundle.G.step(lr);
  bundle.F.step(lr);

  for (double v : {rec.d_x, rec.d_y, rec.adv_g, rec.adv_f, rec.cycle}) {
    if (!std::isfinite(v)) {
      throw DivergenceError("gan loss became non-finite at step " + std::to_string(rec.step));
    }
  }
  return rec;
}

// ---- training loop ----

inline Tensor images_to_batch(const std::vector<Image>& images,
                              const std::vector<size_t>& picks, size_t side) {
  Tensor batch({picks.size(), 3, side, side});
  const int iside = static_cast<int>(side);
  for (size_t b = 0; b < picks.size(); ++b) {
    const Image& img = images[picks[b]];
    if (img.height != iside || img.width != iside || img.channels != 3) {
      throw DimensionError("gan batch image has shape " + std::to_string(img.height) + "x" +
                           std::to_string(img.width) + "x" + std::to_string(img.channels) +
                           ", expected " + std::to_string(side) + "x" + std::to_string(side) +
                           "x3");
    }
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < iside; ++y) {
        for (int x = 0; x < iside; ++x) {
          batch.at4(b, static_cast<size_t>(c), static_cast<size_t>(y),
                    static_cast<size_t>(x)) = img.at(y, x, c);
        }
      }
    }
  }
  return batch;
}

using GanStepCallback = std::function<void(const LossRecord&)>;

// domain_x / domain_y: unit-domain images already warped to the config side.
// Per-step batch indices are drawn with replacement from a step-derived
// substream, so the trace is independent of thread count and platform.
inline std::vector<LossRecord> gan_train(GanBundle& bundle, const std::vector<Image>& domain_x,
                                         const std::vector<Image>& domain_y,
                                         const GanStepCallback& on_step = nullptr) {
  bundle.config.validate();
  if (domain_x.empty() || domain_y.empty()) {
    throw DataError("gan training needs at least one image in each domain");
  }
  std::vector<LossRecord> trace;
  trace.reserve(bundle.config.steps);
  for (size_t step = 0; step < bundle.config.steps; ++step) {
    Rng rng(derive_seed(bundle.config.seed, "gan", 4 + step));
    std::vector<size_t> px(bundle.config.batch_size), py(bundle.config.batch_size);
    for (auto& i : px) i = rng.uniform_index(domain_x.size());
    for (auto& i : py) i = rng.uniform_index(domain_y.size());
    const Tensor bx = images_to_batch(domain_x, px, bundle.config.image_side);
    const Tensor by = images_to_batch(domain_y, py, bundle.config.image_side);
    trace.push_back(gan_train_step(bundle, bx, by, step));
    if (on_step) on_step(trace.back());
  }
  return trace;
}

enum class GanDirection { x_to_y, y_to_x };

// Inference pass of one generator; outputs clamped to the unit domain.
inline std::vector<Image> gan_generate(GanBundle& bundle, const std::vector<Image>& inputs,
                                       GanDirection direction) {
  GanNet& gen = direction == GanDirection::x_to_y ? bundle.G : bundle.F;
  const size_t side = bundle.config.image_side;
  std::vector<Image> out;
  out.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Tensor batch = images_to_batch(inputs, {i}, side);
    const Tensor y = gen.forward(batch, Mode::infer);
    Image img(static_cast<int>(side), static_cast<int>(side), 3, PixelDomain::unit_range);
    for (size_t c = 0; c < 3; ++c) {
      for (size_t yy = 0; yy < side; ++yy) {
        for (size_t xx = 0; xx < side; ++xx) {
          img.at(static_cast<int>(yy), static_cast<int>(xx), static_cast<int>(c)) =
              std::clamp(y.at4(0, c, yy, xx), 0.0, 1.0);
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

// ---- loss trace CSV ----

inline const char* kLossTraceHeader = "step,d_x,d_y,adv_g,adv_f,cycle";

inline void write_loss_trace(const std::vector<LossRecord>& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << kLossTraceHeader << "\n";
  char buf[160];
  for (const LossRecord& r : trace) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f", r.step, r.d_x, r.d_y,
                  r.adv_g, r.adv_f, r.cycle);
    os << buf << "\n";
  }
  if (!os) throw Error("failed writing loss trace to " + path);
}

// ---- bundle persistence ----

constexpr uint16_t kGanBundleVersion = 1;

inline void write_gan_net(std::ostream& os, const GanNet& net) {
  write_u8(os, net.residual ? 1 : 0);
  write_layers(os, net.layers);
}

inline GanNet read_gan_net(std::istream& is) {
  GanNet net;
  const uint8_t residual = read_u8(is);
  if (residual > 1) throw FormatError("gan bundle: residual flag must be 0 or 1");
  net.residual = residual == 1;
  net.layers = read_layers(is);
  return net;
}

inline void save_gan_bundle(const GanBundle& bundle, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write("SKGB", 4);
  write_u16(os, kGanBundleVersion);
  write_u32(os, static_cast<uint32_t>(bundle.config.image_side));
  write_f64(os, bundle.config.cycle_lambda);
  write_f64(os, bundle.config.lr);
  write_u32(os, static_cast<uint32_t>(bundle.config.steps));
  write_u32(os, static_cast<uint32_t>(bundle.config.batch_size));
  write_u64(os, bundle.config.seed);
  write_gan_net(os, bundle.G);
  write_gan_net(os, bundle.F);
  write_gan_net(os, bundle.Dx);
  write_gan_net(os, bundle.Dy);
  if (!os) throw Error("failed writing gan bundle to " + path);
}

inline GanBundle load_gan_bundle(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open gan bundle " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "SKGB") {
    throw FormatError(path + " is not a gan bundle (bad magic)");
  }
  const uint16_t version = read_u16(is);
  if (version != kGanBundleVersion) {
    throw FormatError("gan bundle version " + std::to_string(version) + " not supported");
  }
  GanBundle bundle;
  bundle.config.image_side = read_u32(is);
  bundle.config.cycle_lambda = read_f64(is);
  bundle.config.lr = read_f64(is);
  bundle.config.steps = read_u32(is);
  bundle.config.batch_size = read_u32(is);
  bundle.config.seed = read_u64(is);
  bundle.config.validate();
  bundle.G = read_gan_net(is);
  bundle.F = read_gan_net(is);
  bundle.Dx = read_gan_net(is);
  bundle.Dy = read_gan_net(is);
  return bundle;
}

}  // namespace statekit
