#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qp_reference.hpp"
#include "statekit/svm.hpp"
#include "statekit/svm_io.hpp"
#include "testutil.hpp"

using namespace statekit;

namespace {

std::vector<double> vec(std::initializer_list<double> v) { return std::vector<double>(v); }

struct RandomProblem {
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  std::vector<std::vector<double>> grid;
  double C = 1.0;
  KernelSpec kernel;
  qpref::Kernel ref_kernel = qpref::Kernel::linear;
};

RandomProblem make_problem(uint64_t seed, int which) {
  Rng rng(seed);
  RandomProblem p;
  const size_t n = 6 + rng.uniform_index(15);  // 6..20
  const size_t d = 1 + rng.uniform_index(4);   // 1..4
  p.X.resize(n);
  p.y.resize(n);
  for (size_t i = 0; i < n; ++i) {
    p.X[i].resize(d);
    for (double& v : p.X[i]) v = rng.uniform(-2.0, 2.0);
    p.y[i] = rng.coin() ? 1 : -1;
  }
  // both classes must appear
  p.y[0] = 1;
  p.y[1] = -1;
  const double cs[3] = {0.1, 1.0, 10.0};
  p.C = cs[which % 3];
  switch (which % 3) {
    case 0:
      p.kernel.kind = KernelKind::linear;
      p.ref_kernel = qpref::Kernel::linear;
      break;
    case 1:
      p.kernel.kind = KernelKind::quadratic;
      p.ref_kernel = qpref::Kernel::quadratic;
      break;
    default:
      p.kernel.kind = KernelKind::rbf;
      p.kernel.gamma = 0.7;
      p.ref_kernel = qpref::Kernel::rbf;
      break;
  }
  p.grid.resize(25);
  for (auto& g : p.grid) {
    g.resize(d);
    for (double& v : g) v = rng.uniform(-2.5, 2.5);
  }
  return p;
}

std::vector<std::vector<double>> gram_of(const RandomProblem& p) {
  const size_t n = p.X.size();
  std::vector<std::vector<double>> K(n, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      K[i][j] = kernel_eval(p.kernel, p.X[i], p.X[j]);
    }
  }
  return K;
}

FeatureMatrix gaussian_clusters(const std::vector<std::pair<double, double>>& centers,
                                size_t per_class, double sigma, uint64_t seed) {
  FeatureMatrix fm;
  fm.cols = 2;
  Rng rng(seed);
  for (size_t c = 0; c < centers.size(); ++c) {
    for (size_t i = 0; i < per_class; ++i) {
      fm.data.push_back(rng.normal(centers[c].first, sigma));
      fm.data.push_back(rng.normal(centers[c].second, sigma));
      fm.labels.push_back(static_cast<int>(c));
    }
  }
  fm.rows = fm.labels.size();
  return fm;
}

}  // namespace

TEST(Kernels, HandValues) {
  KernelSpec linear;
  EXPECT_EQ(kernel_eval(linear, vec({1, 2}), vec({3, 4})), 11.0);

  KernelSpec quad;
  quad.kind = KernelKind::quadratic;
  EXPECT_EQ(kernel_eval(quad, vec({1, 0}), vec({0, 1})), 1.0);
  EXPECT_EQ(kernel_eval(quad, vec({1, 2}), vec({3, 4})), 144.0);

  KernelSpec rbf;
  rbf.kind = KernelKind::rbf;
  rbf.gamma = 0.5;
  EXPECT_NEAR(kernel_eval(rbf, vec({0.0}), vec({2.0})), std::exp(-2.0), 1e-15);
  EXPECT_EQ(kernel_eval(rbf, vec({0.7, -0.3}), vec({0.7, -0.3})), 1.0);
}

TEST(Kernels, SymmetricAndValidated) {
  Rng rng(3);
  KernelSpec specs[3];
  specs[1].kind = KernelKind::quadratic;
  specs[2].kind = KernelKind::rbf;
  specs[2].gamma = 0.9;
  for (const KernelSpec& s : specs) {
    for (int t = 0; t < 10; ++t) {
      std::vector<double> a(3), b(3);
      for (double& v : a) v = rng.uniform(-2, 2);
      for (double& v : b) v = rng.uniform(-2, 2);
      EXPECT_EQ(kernel_eval(s, a, b), kernel_eval(s, b, a));
    }
  }
  EXPECT_THROW(kernel_eval(specs[0], vec({1, 2}), vec({1, 2, 3})), DimensionError);
  KernelSpec bad;
  bad.kind = KernelKind::rbf;
  bad.gamma = 0.0;
  EXPECT_THROW(kernel_eval(bad, vec({1.0}), vec({2.0})), DataError);
}

// exp(-g*||x-y||^2) is invariant under x,y -> 2x,2y with g -> g/4, and the
// power-of-two scaling keeps the float arithmetic bit-comparable.
TEST(Kernels, RbfScaleInvariance) {
  Rng rng(4);
  KernelSpec k1, k2;
  k1.kind = k2.kind = KernelKind::rbf;
  k1.gamma = 0.8;
  k2.gamma = 0.8 / 4.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(3), y(3), x2(3), y2(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = rng.uniform(-2, 2);
      y[i] = rng.uniform(-2, 2);
      x2[i] = 2.0 * x[i];
      y2[i] = 2.0 * y[i];
    }
    EXPECT_NEAR(kernel_eval(k1, x, y), kernel_eval(k2, x2, y2), 1e-12);
  }
}

TEST(KernelNames, RoundTrip) {
  for (const char* name : {"linear", "quadratic", "rbf"}) {
    EXPECT_STREQ(kernel_kind_name(kernel_kind_from_name(name)), name);
  }
  EXPECT_THROW(kernel_kind_from_name("cubic"), DataError);
}

// Two opposite points at +-1: by symmetry both alphas are 0.5 and the
// decision function is f(x) = x with zero bias.
TEST(Smo, TwoPointClosedForm) {
  const std::vector<std::vector<double>> X = {{-1.0}, {1.0}};
  const std::vector<int> y = {-1, 1};
  const SmoResult r = smo_train_binary(X, y, 10.0, KernelSpec{});
  ASSERT_EQ(r.alpha.size(), 2u);
  EXPECT_NEAR(r.alpha[0], 0.5, 1e-6);
  EXPECT_NEAR(r.alpha[1], 0.5, 1e-6);
  EXPECT_NEAR(r.bias, 0.0, 1e-6);
  const double probe = 0.37;
  EXPECT_NEAR(r.machine.decision(KernelSpec{}, &probe, 1), 0.37, 1e-6);
}

TEST(Smo, MatchesQpOracleOnRandomProblems) {
  for (int which = 0; which < 10; ++which) {
    const RandomProblem p = make_problem(1000 + which, which);
    const size_t n = p.X.size();

    const SmoResult smo = smo_train_binary(p.X, p.y, p.C, p.kernel, 1e-6, 42);
    const auto K = gram_of(p);
    const double w_smo = dual_objective(smo.alpha, p.y, K);

    const auto K_ref = qpref::gram(p.ref_kernel, p.kernel.gamma, p.X);
    const qpref::Solution ref = qpref::solve(K_ref, p.y, p.C);

    EXPECT_NEAR(w_smo, ref.objective, 1e-3)
        << "problem " << which << " kernel " << kernel_kind_name(p.kernel.kind)
        << " C " << p.C << " n " << n << " polished " << ref.polished;

    // feasibility of the production solution
    double balance = 0.0;
    for (size_t i = 0; i < n; ++i) {
      EXPECT_GE(smo.alpha[i], -1e-12);
      EXPECT_LE(smo.alpha[i], p.C + 1e-9);
      balance += smo.alpha[i] * p.y[i];
    }
    EXPECT_LE(std::abs(balance), 1e-8) << "problem " << which;
    EXPECT_EQ(count_kkt_violations(smo.alpha, p.y, K, smo.bias, p.C, 1e-3), 0u)
        << "problem " << which;

    // held-out grid: identical hard predictions
    for (size_t g = 0; g < p.grid.size(); ++g) {
      const double f_smo = smo.machine.decision(p.kernel, p.grid[g].data(), p.grid[g].size());
      const double f_ref = qpref::decision(p.ref_kernel, p.kernel.gamma, p.X, p.y, ref.alpha,
                                           ref.bias, p.grid[g]);
      EXPECT_EQ(f_smo >= 0.0, f_ref >= 0.0)
          << "problem " << which << " grid point " << g << ": smo " << f_smo << " ref " << f_ref;
    }
  }
}

TEST(Smo, SeparatesEasyData) {
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  Rng rng(9);
  for (int i = 0; i < 12; ++i) {
    X.push_back({rng.uniform(1.0, 2.0), rng.uniform(1.0, 2.0)});
    y.push_back(1);
    X.push_back({rng.uniform(-2.0, -1.0), rng.uniform(-2.0, -1.0)});
    y.push_back(-1);
  }
  const SmoResult r = smo_train_binary(X, y, 10.0, KernelSpec{});
  for (size_t i = 0; i < X.size(); ++i) {
    const double f = r.machine.decision(KernelSpec{}, X[i].data(), 2);
    EXPECT_GT(f * y[i], 0.0) << "row " << i;
  }
}

TEST(Smo, RejectsDegenerateInputs) {
  const std::vector<std::vector<double>> X = {{0.0}, {1.0}};
  EXPECT_THROW(smo_train_binary({{0.0}}, {1}, 1.0, KernelSpec{}), DataError);
  EXPECT_THROW(smo_train_binary(X, {1, 1}, 1.0, KernelSpec{}), DataError);
  EXPECT_THROW(smo_train_binary(X, {1, 0}, 1.0, KernelSpec{}), DataError);
  EXPECT_THROW(smo_train_binary(X, {1}, 1.0, KernelSpec{}), DimensionError);
  EXPECT_THROW(smo_train_binary(X, {1, -1}, 0.0, KernelSpec{}), DataError);
  EXPECT_THROW(smo_train_binary({{0.0}, {1.0, 2.0}}, {1, -1}, 1.0, KernelSpec{}),
               DimensionError);
}

TEST(Multiclass, PairCountAndClassList) {
  FeatureMatrix fm;
  fm.cols = 2;
  Rng rng(5);
  for (int c = 0; c < 11; ++c) {
    for (int i = 0; i < 3; ++i) {
      fm.data.push_back(rng.uniform(-1, 1) + 3.0 * c);
      fm.data.push_back(rng.uniform(-1, 1) - 3.0 * c);
      fm.labels.push_back(c);
    }
  }
  fm.rows = fm.labels.size();
  const SvmModel model = train_multiclass(fm, KernelSpec{}, 1.0);
  EXPECT_EQ(model.binaries.size(), 55u);  // C(11,2)
  ASSERT_EQ(model.classes.size(), 11u);
  for (int c = 0; c < 11; ++c) EXPECT_EQ(model.classes[c], c);
  for (const BinarySvm& m : model.binaries) EXPECT_LT(m.class_a, m.class_b);
}

TEST(Multiclass, TwoClassReducesToBinarySign) {
  const FeatureMatrix fm = gaussian_clusters({{0.0, 0.0}, {6.0, 6.0}}, 15, 0.8, 6);
  const SvmModel model = train_multiclass(fm, KernelSpec{}, 1.0);
  ASSERT_EQ(model.binaries.size(), 1u);
  for (size_t i = 0; i < fm.rows; ++i) {
    const std::vector<double> z = standardize_row(model, fm.row(i));
    const double f = model.binaries[0].decision(model.kernel, z.data(), z.size());
    const int expected = f >= 0.0 ? model.binaries[0].class_a : model.binaries[0].class_b;
    EXPECT_EQ(predict(model, fm.row(i), fm.cols), expected) << "row " << i;
  }
}

TEST(Multiclass, ThreeGaussiansGeneralize) {
  const std::vector<std::pair<double, double>> centers = {{0.0, 0.0}, {6.0, 6.0}, {-6.0, 6.0}};
  const FeatureMatrix train = gaussian_clusters(centers, 25, 0.8, 7);
  const FeatureMatrix held_out = gaussian_clusters(centers, 25, 0.8, 8);
  for (KernelKind kind : {KernelKind::linear, KernelKind::rbf}) {
    KernelSpec spec;
    spec.kind = kind;
    const SvmModel model = train_multiclass(train, spec, 1.0);
    EXPECT_GE(accuracy_on(model, held_out), 0.95) << kernel_kind_name(kind);
  }
}

TEST(Multiclass, RejectsSingleClassAndEmpty) {
  FeatureMatrix fm;
  fm.cols = 1;
  fm.rows = 3;
  fm.data = {0.0, 1.0, 2.0};
  fm.labels = {4, 4, 4};
  EXPECT_THROW(train_multiclass(fm, KernelSpec{}), DataError);
  EXPECT_THROW(train_multiclass(FeatureMatrix{}, KernelSpec{}), DataError);
}

TEST(Multiclass, StandardizationMatchesHandStats) {
  FeatureMatrix fm;
  fm.cols = 2;
  fm.rows = 4;
  // second dimension is constant: its std divisor must fall back to 1
  fm.data = {1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 6.0, 5.0};
  fm.labels = {0, 0, 1, 1};
  const SvmModel model = train_multiclass(fm, KernelSpec{}, 1.0);
  EXPECT_NEAR(model.feature_mean[0], 3.0, 1e-12);
  EXPECT_NEAR(model.feature_mean[1], 5.0, 1e-12);
  // biased std of {1,2,3,6}: sqrt(14/4)
  EXPECT_NEAR(model.feature_std[0], std::sqrt(3.5), 1e-12);
  EXPECT_EQ(model.feature_std[1], 1.0);
}

// Standardized features have unit variance per dimension, so the automatic
// rbf gamma resolves to 1/cols.
TEST(Multiclass, AutoRbfGamma) {
  const FeatureMatrix fm = gaussian_clusters({{0.0, 0.0}, {4.0, 4.0}}, 10, 1.0, 9);
  KernelSpec spec;
  spec.kind = KernelKind::rbf;
  spec.gamma = 0.0;
  const SvmModel model = train_multiclass(fm, spec, 1.0);
  EXPECT_NEAR(model.kernel.gamma, 1.0 / static_cast<double>(fm.cols), 1e-9);
}

// Hand-built machines with no support vectors decide purely on bias, which
// pins down the vote and tie-break rules exactly.
TEST(Predict, VoteCycleFallsBackToSummedMargin) {
  SvmModel model;
  model.classes = {0, 1, 2};
  model.feature_mean = {0.0};
  model.feature_std = {1.0};
  BinarySvm m01, m02, m12;
  m01.class_a = 0;
  m01.class_b = 1;
  m01.bias = 0.3;  // votes 0 with margin 0.3
  m02.class_a = 0;
  m02.class_b = 2;
  m02.bias = -0.5;  // votes 2 with margin 0.5
  m12.class_a = 1;
  m12.class_b = 2;
  m12.bias = 0.2;  // votes 1 with margin 0.2
  model.binaries = {m01, m02, m12};
  const double x = 0.0;
  EXPECT_EQ(predict(model, &x, 1), 2);
}

TEST(Predict, FullTieGoesToLowestClassId) {
  SvmModel model;
  model.classes = {0, 1, 2};
  model.feature_mean = {0.0};
  model.feature_std = {1.0};
  BinarySvm m01, m02, m12;
  m01.class_a = 0;
  m01.class_b = 1;
  m01.bias = 0.5;
  m02.class_a = 0;
  m02.class_b = 2;
  m02.bias = -0.5;
  m12.class_a = 1;
  m12.class_b = 2;
  m12.bias = 0.5;
  model.binaries = {m01, m02, m12};
  const double x = 0.0;
  EXPECT_EQ(predict(model, &x, 1), 0);
}

TEST(Predict, DimensionMismatchRejected) {
  const FeatureMatrix fm = gaussian_clusters({{0.0, 0.0}, {5.0, 5.0}}, 5, 0.5, 10);
  const SvmModel model = train_multiclass(fm, KernelSpec{}, 1.0);
  const std::vector<double> wrong = {1.0, 2.0, 3.0};
  EXPECT_THROW(predict(model, wrong), DimensionError);
}

TEST(FeatureFile, RoundTripQuantizesOnce) {
  testutil::TempDir dir;
  FeatureMatrix fm;
  fm.rows = 3;
  fm.cols = 2;
  Rng rng(11);
  for (size_t i = 0; i < 6; ++i) fm.data.push_back(rng.uniform(-5.0, 5.0));
  fm.labels = {0, 5, 10};

  const std::string path = dir.file("f.feat");
  save_features(fm, path);
  const FeatureMatrix once = load_features(path);
  ASSERT_EQ(once.rows, fm.rows);
  ASSERT_EQ(once.cols, fm.cols);
  EXPECT_EQ(once.labels, fm.labels);
  for (size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(once.data[i], fm.data[i], 1e-5);  // f32 quantization
    EXPECT_EQ(once.data[i], static_cast<double>(static_cast<float>(fm.data[i])));
  }

  save_features(once, dir.file("g.feat"));
  const FeatureMatrix twice = load_features(dir.file("g.feat"));
  EXPECT_EQ(twice.data, once.data);  // second trip is exact
}

TEST(FeatureFile, RejectsBadBytes) {
  testutil::TempDir dir;
  FeatureMatrix fm;
  fm.rows = 2;
  fm.cols = 1;
  fm.data = {1.0, 2.0};
  fm.labels = {0, 1};
  save_features(fm, dir.file("ok.feat"));

  std::vector<uint8_t> bytes = read_file_bytes(dir.file("ok.feat"));
  std::vector<uint8_t> bad = bytes;
  bad[0] = 'X';
  write_file_bytes(dir.file("bad.feat"), bad);
  EXPECT_THROW(load_features(dir.file("bad.feat")), FormatError);

  std::vector<uint8_t> trunc(bytes.begin(), bytes.end() - 3);
  write_file_bytes(dir.file("trunc.feat"), trunc);
  EXPECT_THROW(load_features(dir.file("trunc.feat")), IntegrityError);

  EXPECT_THROW(load_features(dir.file("missing.feat")), DataError);
}

TEST(FeatureMatrixChecks, ValidateCatchesBadContent) {
  FeatureMatrix fm;
  fm.rows = 2;
  fm.cols = 1;
  fm.data = {1.0, 2.0};
  fm.labels = {0, 11};
  EXPECT_THROW(fm.validate(), DataError);
  fm.labels = {0, 1};
  fm.data[0] = std::nan("");
  EXPECT_THROW(fm.validate(), DataError);
  fm.data[0] = 1.0;
  fm.data.push_back(3.0);
  EXPECT_THROW(fm.validate(), DimensionError);
}

TEST(ModelFile, JsonRoundTripIsExact) {
  testutil::TempDir dir;
  const FeatureMatrix fm = gaussian_clusters({{0.0, 0.0}, {5.0, 5.0}, {0.0, 7.0}}, 8, 0.6, 12);
  KernelSpec spec;
  spec.kind = KernelKind::rbf;
  spec.gamma = 0.0;
  const SvmModel model = train_multiclass(fm, spec, 2.0);

  const std::string path = dir.file("model.json");
  save_svm_model(model, path);
  const SvmModel back = load_svm_model(path);

  EXPECT_EQ(back.kernel.kind, model.kernel.kind);
  EXPECT_EQ(back.kernel.gamma, model.kernel.gamma);
  EXPECT_EQ(back.C, model.C);
  EXPECT_EQ(back.classes, model.classes);
  EXPECT_EQ(back.feature_mean, model.feature_mean);
  EXPECT_EQ(back.feature_std, model.feature_std);
  ASSERT_EQ(back.binaries.size(), model.binaries.size());
  for (size_t i = 0; i < model.binaries.size(); ++i) {
    EXPECT_EQ(back.binaries[i].bias, model.binaries[i].bias);
    EXPECT_EQ(back.binaries[i].alphas, model.binaries[i].alphas);
    EXPECT_EQ(back.binaries[i].support_vectors, model.binaries[i].support_vectors);
  }
  for (size_t i = 0; i < fm.rows; ++i) {
    EXPECT_EQ(predict(back, fm.row(i), fm.cols), predict(model, fm.row(i), fm.cols));
  }
}

TEST(ModelFile, RejectsGarbage) {
  testutil::TempDir dir;
  {
    std::ofstream os(dir.file("nope.json"));
    os << "{ not json";
  }
  EXPECT_THROW(load_svm_model(dir.file("nope.json")), FormatError);
  {
    std::ofstream os(dir.file("wrong.json"));
    os << "{\"format\": \"something-else\", \"version\": 1}";
  }
  EXPECT_THROW(load_svm_model(dir.file("wrong.json")), FormatError);
  EXPECT_THROW(load_svm_model(dir.file("absent.json")), DataError);
}

TEST(Benchmark, ThreeOrderedRowsLinearWinsSeparable) {
  const std::vector<std::pair<double, double>> centers = {{0.0, 0.0}, {8.0, 8.0}, {-8.0, 8.0}};
  const FeatureMatrix train = gaussian_clusters(centers, 12, 0.5, 13);
  const FeatureMatrix val = gaussian_clusters(centers, 12, 0.5, 14);
  const std::vector<KernelScore> scores = benchmark_kernels(train, val);
  ASSERT_EQ(scores.size(), 3u);
  EXPECT_EQ(scores[0].kernel, "linear");
  EXPECT_EQ(scores[1].kernel, "quadratic");
  EXPECT_EQ(scores[2].kernel, "rbf");
  EXPECT_EQ(scores[0].accuracy, 1.0);

  testutil::TempDir dir;
  write_kernel_table(scores, dir.file("table.csv"));
  std::ifstream is(dir.file("table.csv"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "kernel,accuracy");
  EXPECT_EQ(lines[1], "linear,1.000000");
  EXPECT_EQ(lines[2].rfind("quadratic,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("rbf,", 0), 0u);
}
