#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "statekit/binio.hpp"
#include "statekit/dataset.hpp"
#include "statekit/errors.hpp"
#include "statekit/parallel.hpp"
#include "statekit/rng.hpp"

namespace statekit {

enum class KernelKind { linear, quadratic, rbf };

inline const char* kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "linear";
    case KernelKind::quadratic: return "quadratic";
    case KernelKind::rbf: return "rbf";
  }
  return "?";
}

inline KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "linear") return KernelKind::linear;
  if (name == "quadratic") return KernelKind::quadratic;
  if (name == "rbf") return KernelKind::rbf;
  throw DataError("unknown kernel '" + name + "' (expected linear, quadratic or rbf)");
}

// gamma <= 0 means "resolve automatically from the training features".
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double gamma = 0.0;
};

inline double kernel_eval(const KernelSpec& spec, const double* x, const double* y, size_t dim) {
  switch (spec.kind) {
    case KernelKind::linear: {
      double dot = 0.0;
      for (size_t i = 0; i < dim; ++i) dot += x[i] * y[i];
      return dot;
    }
    case KernelKind::quadratic: {
      double dot = 0.0;
      for (size_t i = 0; i < dim; ++i) dot += x[i] * y[i];
      return (dot + 1.0) * (dot + 1.0);
    }
    case KernelKind::rbf: {
      if (spec.gamma <= 0.0) throw DataError("rbf kernel requires gamma > 0");
      double d2 = 0.0;
      for (size_t i = 0; i < dim; ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
      }
      return std::exp(-spec.gamma * d2);
    }
  }
  throw DataError("unknown kernel kind");
}

inline double kernel_eval(const KernelSpec& spec, const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw DimensionError("kernel_eval: vectors of dimension " + std::to_string(x.size()) +
                         " and " + std::to_string(y.size()));
  }
  return kernel_eval(spec, x.data(), y.data(), x.size());
}

// ---- feature matrix ----

struct FeatureMatrix {
  size_t rows = 0, cols = 0;
  std::vector<double> data;  // row-major
  std::vector<int> labels;

  const double* row(size_t i) const { return data.data() + i * cols; }
  double* row(size_t i) { return data.data() + i * cols; }

  void validate() const {
    if (data.size() != rows * cols) {
      throw DimensionError("feature matrix: data size does not match rows x cols");
    }
    if (labels.size() != rows) {
      throw DimensionError("feature matrix: " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(rows) + " rows");
    }
    for (double v : data) {
      if (!std::isfinite(v)) throw DataError("feature matrix contains a non-finite value");
    }
    for (int l : labels) {
      if (l < 0 || l >= static_cast<int>(kNumClasses)) {
        throw DataError("feature matrix label " + std::to_string(l) + " outside [0," +
                        std::to_string(kNumClasses - 1) + "]");
      }
    }
  }
};

constexpr uint16_t kFeatureFileVersion = 1;

inline void save_features(const FeatureMatrix& fm, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os.write("FEAT", 4);
  write_u16(os, kFeatureFileVersion);
  write_u32(os, static_cast<uint32_t>(fm.rows));
  write_u32(os, static_cast<uint32_t>(fm.cols));
  for (double v : fm.data) write_f32(os, static_cast<float>(v));
  for (int l : fm.labels) write_u16(os, static_cast<uint16_t>(l));
  if (!os) throw Error("failed writing features to " + path);
}

inline FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open feature file " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "FEAT") {
    throw FormatError(path + " is not a feature file (bad magic)");
  }
  const uint16_t version = read_u16(is);
  if (version != kFeatureFileVersion) {
    throw FormatError("feature file version " + std::to_string(version) + " not supported");
  }
  FeatureMatrix fm;
  fm.rows = read_u32(is);
  fm.cols = read_u32(is);
  fm.data.resize(fm.rows * fm.cols);
  for (double& v : fm.data) v = static_cast<double>(read_f32(is));
  fm.labels.resize(fm.rows);
  for (int& l : fm.labels) l = static_cast<int>(read_u16(is));
  fm.validate();
  return fm;
}

// ---- binary machine ----

struct BinarySvm {
  int class_a = 0, class_b = 0;  // decision >= 0 votes class_a
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas;  // positive dual coefficients
  std::vector<int> ys;         // +1 (class_a) or -1 (class_b) per support vector
  double bias = 0.0;

  double decision(const KernelSpec& kernel, const double* x, size_t dim) const {
    double f = bias;
    for (size_t s = 0; s < support_vectors.size(); ++s) {
      f += alphas[s] * ys[s] * kernel_eval(kernel, support_vectors[s].data(), x, dim);
    }
    return f;
  }
};

// Full solver state, exposed so tests can compare dual objectives against an
// independent QP solver.
struct SmoResult {
  BinarySvm machine;
  std::vector<double> alpha;  // one per training row
  double bias = 0.0;
  size_t sweeps = 0;
};

inline double dual_objective(const std::vector<double>& alpha, const std::vector<int>& y,
                             const std::vector<std::vector<double>>& K) {
  const size_t n = alpha.size();
  double obj = 0.0;
  for (size_t i = 0; i < n; ++i) obj += alpha[i];
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * K[i][j];
    }
  }
  return obj;
}

inline size_t count_kkt_violations(const std::vector<double>& alpha, const std::vector<int>& y,
                                   const std::vector<std::vector<double>>& K, double bias,
                                   double C, double tol) {
  const size_t n = alpha.size();
  size_t violations = 0;
  for (size_t i = 0; i < n; ++i) {
    double f = bias;
    for (size_t j = 0; j < n; ++j) f += alpha[j] * y[j] * K[i][j];
    const double m = y[i] * f;
    if (alpha[i] <= 0.0) {
      if (m < 1.0 - tol) ++violations;
    } else if (alpha[i] >= C) {
      if (m > 1.0 + tol) ++violations;
    } else {
      if (std::abs(m - 1.0) > tol) ++violations;
    }
  }
  return violations;
}

// Sequential minimal optimization on the dual of the soft-margin problem.
// Pair selection follows the classic two-level heuristic: the outer loop
// alternates full sweeps with non-bound sweeps, the inner choice maximizes
// |E_i - E_j| and falls back to scanning from a seeded random offset. Stops
// when a full sweep makes no progress; gives up after 100*N + 1000 sweeps.
// Pairwise updates converge linearly, so tight tolerances on ill-conditioned
// Gram matrices legitimately take tens of sweeps per row.
inline SmoResult smo_train_binary(const std::vector<std::vector<double>>& X,
                                  const std::vector<int>& y, double C,
                                  const KernelSpec& kernel, double tol = 1e-3,
                                  uint64_t seed = 0) {
  const size_t n = X.size();
  if (n < 2) throw DataError("smo: need at least 2 training rows, got " + std::to_string(n));
  if (y.size() != n) throw DimensionError("smo: label count does not match row count");
  bool has_pos = false, has_neg = false;
  for (int yi : y) {
    if (yi == 1) has_pos = true;
    else if (yi == -1) has_neg = true;
    else throw DataError("smo: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw DataError("smo: both classes must be present");
  if (C <= 0.0) throw DataError("smo: C must be > 0");
  const size_t dim = X[0].size();
  for (const auto& r : X) {
    if (r.size() != dim) throw DimensionError("smo: ragged feature rows");
  }

  std::vector<std::vector<double>> K(n, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      K[i][j] = K[j][i] = kernel_eval(kernel, X[i].data(), X[j].data(), dim);
    }
  }

  std::vector<double> alpha(n, 0.0);
  std::vector<double> err(n);  // E_i = f(x_i) - y_i; starts at -y with alpha = 0
  for (size_t i = 0; i < n; ++i) err[i] = -static_cast<double>(y[i]);
  double bias = 0.0;
  Rng rng(derive_seed(seed, "smo", 0));
  const double eps = 1e-12;

  const auto is_non_bound = [&](size_t i) { return alpha[i] > 0.0 && alpha[i] < C; };

  const auto take_step = [&](size_t i1, size_t i2) -> bool {
    if (i1 == i2) return false;
    const double a1_old = alpha[i1], a2_old = alpha[i2];
    const int y1 = y[i1], y2 = y[i2];
    const double E1 = err[i1], E2 = err[i2];
    const double s = y1 * y2;
    double L, H;
    if (y1 != y2) {
      L = std::max(0.0, a2_old - a1_old);
      H = std::min(C, C + a2_old - a1_old);
    } else {
      L = std::max(0.0, a1_old + a2_old - C);
      H = std::min(C, a1_old + a2_old);
    }
    if (L >= H) return false;
    const double k11 = K[i1][i1], k12 = K[i1][i2], k22 = K[i2][i2];
    const double eta = k11 + k22 - 2.0 * k12;
    double a2;
    if (eta > 0.0) {
      a2 = a2_old + y2 * (E1 - E2) / eta;
      a2 = std::clamp(a2, L, H);
    } else {
      // flat or concave direction: evaluate the objective at both ends
      const double f1 = y1 * (E1 + bias) - a1_old * k11 - s * a2_old * k12;
      const double f2 = y2 * (E2 + bias) - s * a1_old * k12 - a2_old * k22;
      const double L1 = a1_old + s * (a2_old - L);
      const double H1 = a1_old + s * (a2_old - H);
      const double obj_l = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 +
                           s * L * L1 * k12;
      const double obj_h = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 +
                           s * H * H1 * k12;
      if (obj_l < obj_h - eps) a2 = L;
      else if (obj_h < obj_l - eps) a2 = H;
      else return false;
    }
    if (std::abs(a2 - a2_old) < eps * (a2 + a2_old + eps)) return false;
    const double a1 = a1_old + s * (a2_old - a2);

    const double b1 = bias - E1 - y1 * (a1 - a1_old) * k11 - y2 * (a2 - a2_old) * k12;
    const double b2 = bias - E2 - y1 * (a1 - a1_old) * k12 - y2 * (a2 - a2_old) * k22;
    double b_new;
    if (a1 > 0.0 && a1 < C) b_new = b1;
    else if (a2 > 0.0 && a2 < C) b_new = b2;
    else b_new = (b1 + b2) / 2.0;

    const double d1 = y1 * (a1 - a1_old), d2 = y2 * (a2 - a2_old), db = b_new - bias;
    for (size_t j = 0; j < n; ++j) err[j] += d1 * K[i1][j] + d2 * K[i2][j] + db;
    alpha[i1] = a1;
    alpha[i2] = a2;
    bias = b_new;
    return true;
  };

  const auto examine = [&](size_t i2) -> bool {
    const double E2 = err[i2];
    const double r2 = E2 * y[i2];
    if ((r2 < -tol && alpha[i2] < C) || (r2 > tol && alpha[i2] > 0.0)) {
      // first choice: maximize |E1 - E2| over non-bound rows
      size_t best = n;
      double best_gap = -1.0;
      for (size_t i = 0; i < n; ++i) {
        if (!is_non_bound(i)) continue;
        const double gap = std::abs(err[i] - E2);
        if (gap > best_gap) {
          best_gap = gap;
          best = i;
        }
      }
      if (best < n && take_step(best, i2)) return true;
      const size_t off1 = rng.uniform_index(n);
      for (size_t k = 0; k < n; ++k) {
        const size_t i = (off1 + k) % n;
        if (is_non_bound(i) && take_step(i, i2)) return true;
      }
      const size_t off2 = rng.uniform_index(n);
      for (size_t k = 0; k < n; ++k) {
        const size_t i = (off2 + k) % n;
        if (take_step(i, i2)) return true;
      }
    }
    return false;
  };

  const size_t max_sweeps = 100 * n + 1000;
  size_t sweeps = 0;
  bool examine_all = true;
  size_t changed = 1;
  while (changed > 0 || examine_all) {
    if (++sweeps > max_sweeps) {
      const size_t violations = count_kkt_violations(alpha, y, K, bias, C, tol);
      if (violations > 0) {
        throw ConvergenceError("smo did not converge within " + std::to_string(max_sweeps) +
                               " sweeps; " + std::to_string(violations) + " of " +
                               std::to_string(n) + " rows violate KKT at tol " +
                               std::to_string(tol));
      }
      break;
    }
    changed = 0;
    if (examine_all) {
      for (size_t i = 0; i < n; ++i) changed += examine(i) ? 1 : 0;
    } else {
      for (size_t i = 0; i < n; ++i) {
        if (is_non_bound(i)) changed += examine(i) ? 1 : 0;
      }
    }
    if (examine_all) examine_all = false;
    else if (changed == 0) examine_all = true;
  }

  SmoResult result;
  result.alpha = alpha;
  result.bias = bias;
  result.sweeps = sweeps;
  result.machine.bias = bias;
  for (size_t i = 0; i < n; ++i) {
    if (alpha[i] > 0.0) {
      result.machine.support_vectors.push_back(X[i]);
      result.machine.alphas.push_back(alpha[i]);
      result.machine.ys.push_back(y[i]);
    }
  }
  return result;
}

// ---- multiclass one-vs-one ----

struct SvmModel {
  KernelSpec kernel;
  double C = 1.0;
  std::vector<int> classes;            // observed class ids, ascending
  std::vector<double> feature_mean;    // per-dimension standardization
  std::vector<double> feature_std;
  std::vector<BinarySvm> binaries;     // one per class pair (a < b)

  size_t dim() const { return feature_mean.size(); }
};

inline std::vector<double> standardize_row(const SvmModel& model, const double* x) {
  std::vector<double> out(model.dim());
  for (size_t d = 0; d < out.size(); ++d) {
    out[d] = (x[d] - model.feature_mean[d]) / model.feature_std[d];
  }
  return out;
}

inline SvmModel train_multiclass(const FeatureMatrix& features, KernelSpec kernel,
                                 double C = 1.0, double tol = 1e-3, uint64_t seed = 0,
                                 size_t threads = 1) {
  features.validate();
  if (features.rows == 0) throw DataError("svm: empty feature matrix");

  SvmModel model;
  model.C = C;
  model.feature_mean.assign(features.cols, 0.0);
  model.feature_std.assign(features.cols, 0.0);
  for (size_t i = 0; i < features.rows; ++i) {
    for (size_t d = 0; d < features.cols; ++d) model.feature_mean[d] += features.row(i)[d];
  }
  for (double& v : model.feature_mean) v /= static_cast<double>(features.rows);
  for (size_t i = 0; i < features.rows; ++i) {
    for (size_t d = 0; d < features.cols; ++d) {
      const double diff = features.row(i)[d] - model.feature_mean[d];
      model.feature_std[d] += diff * diff;
    }
  }
  for (double& v : model.feature_std) {
    v = std::sqrt(v / static_cast<double>(features.rows));
    if (v < 1e-12) v = 1.0;  // constant dimension: leave centered values at zero
  }

  std::vector<std::vector<double>> Z(features.rows);
  for (size_t i = 0; i < features.rows; ++i) {
    Z[i] = standardize_row(model, features.row(i));
  }

  if (kernel.kind == KernelKind::rbf && kernel.gamma <= 0.0) {
    // scale heuristic: 1 / (D * total variance of the standardized features)
    double var = 0.0;
    double mean = 0.0;
    const size_t total = features.rows * features.cols;
    for (const auto& r : Z) {
      for (double v : r) mean += v;
    }
    mean /= static_cast<double>(total);
    for (const auto& r : Z) {
      for (double v : r) var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(total);
    if (var < 1e-12) var = 1.0;
    kernel.gamma = 1.0 / (static_cast<double>(features.cols) * var);
  }
  model.kernel = kernel;

  std::vector<char> seen(kNumClasses, 0);
  for (int l : features.labels) seen[static_cast<size_t>(l)] = 1;
  for (size_t c = 0; c < kNumClasses; ++c) {
    if (seen[c]) model.classes.push_back(static_cast<int>(c));
  }
  if (model.classes.size() < 2) {
    throw DataError("svm: need at least 2 classes, got " + std::to_string(model.classes.size()));
  }

  std::vector<std::pair<int, int>> pairs;
  for (size_t i = 0; i < model.classes.size(); ++i) {
    for (size_t j = i + 1; j < model.classes.size(); ++j) {
      pairs.emplace_back(model.classes[i], model.classes[j]);
    }
  }

  std::vector<BinarySvm> machines(pairs.size());
  std::vector<char> trained(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](size_t p) {
    const auto [a, b] = pairs[p];
    std::vector<std::vector<double>> X;
    std::vector<int> y;
    for (size_t i = 0; i < features.rows; ++i) {
      if (features.labels[i] == a) {
        X.push_back(Z[i]);
        y.push_back(1);
      } else if (features.labels[i] == b) {
        X.push_back(Z[i]);
        y.push_back(-1);
      }
    }
    if (X.size() < 2) return;  // cannot happen for observed classes; defensive
    SmoResult r = smo_train_binary(X, y, C, model.kernel, tol, derive_seed(seed, "svm", p));
    r.machine.class_a = a;
    r.machine.class_b = b;
    machines[p] = std::move(r.machine);
    trained[p] = 1;
  });
  for (size_t p = 0; p < pairs.size(); ++p) {
    if (!trained[p]) {
      std::cerr << "warning: skipped svm pair (" << pairs[p].first << "," << pairs[p].second
                << "): not enough samples\n";
      continue;
    }
    model.binaries.push_back(std::move(machines[p]));
  }
  return model;
}

// Majority vote over all pairwise machines. Ties go to the larger summed
// absolute margin, then to the lowest class id.
inline int predict(const SvmModel& model, const double* x, size_t dim) {
  if (dim != model.dim()) {
    throw DimensionError("svm predict: feature dimension " + std::to_string(dim) +
                         " does not match training dimension " + std::to_string(model.dim()));
  }
  const std::vector<double> z = standardize_row(model, x);
  std::vector<int> votes(kNumClasses, 0);
  std::vector<double> margin(kNumClasses, 0.0);
  for (const BinarySvm& m : model.binaries) {
    const double f = m.decision(model.kernel, z.data(), z.size());
    const int winner = f >= 0.0 ? m.class_a : m.class_b;
    votes[static_cast<size_t>(winner)] += 1;
    margin[static_cast<size_t>(winner)] += std::abs(f);
  }
  int best = model.classes.front();
  for (int c : model.classes) {
    if (votes[c] > votes[best]) best = c;
    else if (votes[c] == votes[best] && margin[c] > margin[best]) best = c;
  }
  return best;
}

inline int predict(const SvmModel& model, const std::vector<double>& x) {
  return predict(model, x.data(), x.size());
}

inline double accuracy_on(const SvmModel& model, const FeatureMatrix& features) {
  if (features.rows == 0) throw DataError("svm: empty evaluation set");
  size_t correct = 0;
  for (size_t i = 0; i < features.rows; ++i) {
    if (predict(model, features.row(i), features.cols) == features.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(features.rows);
}

// ---- kernel benchmark ----

struct KernelScore {
  std::string kernel;
  double accuracy = 0.0;
};

inline std::vector<KernelScore> benchmark_kernels(const FeatureMatrix& train,
                                                  const FeatureMatrix& val, double C = 1.0,
                                                  double rbf_gamma = 0.0, double tol = 1e-3,
                                                  uint64_t seed = 0, size_t threads = 1) {
  if (train.rows == 0 || val.rows == 0) {
    throw DataError("kernel benchmark: both splits must be nonempty");
  }
  std::vector<KernelScore> out;
  for (KernelKind kind : {KernelKind::linear, KernelKind::quadratic, KernelKind::rbf}) {
    KernelSpec spec;
    spec.kind = kind;
    spec.gamma = kind == KernelKind::rbf ? rbf_gamma : 0.0;
    SvmModel model = train_multiclass(train, spec, C, tol, seed, threads);
    out.push_back({kernel_kind_name(kind), accuracy_on(model, val)});
  }
  return out;
}

inline void write_kernel_table(const std::vector<KernelScore>& scores, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << "kernel,accuracy\n";
  char buf[64];
  for (const KernelScore& s : scores) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f", s.kernel.c_str(), s.accuracy);
    os << buf << "\n";
  }
  if (!os) throw Error("failed writing kernel table to " + path);
}

}  // namespace statekit
