#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "statekit/errors.hpp"
#include "statekit/svm.hpp"

namespace statekit {

// SVM models travel as JSON: small, diffable, and the dual coefficients are
// exact (doubles round-trip through the shortest-representation printer).

inline void save_svm_model(const SvmModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = "statekit-svm";
  j["version"] = 1;
  j["kernel"] = {{"kind", kernel_kind_name(model.kernel.kind)}, {"gamma", model.kernel.gamma}};
  j["C"] = model.C;
  j["classes"] = model.classes;
  j["feature_mean"] = model.feature_mean;
  j["feature_std"] = model.feature_std;
  j["binaries"] = nlohmann::json::array();
  for (const BinarySvm& m : model.binaries) {
    j["binaries"].push_back({{"class_a", m.class_a},
                             {"class_b", m.class_b},
                             {"bias", m.bias},
                             {"alphas", m.alphas},
                             {"ys", m.ys},
                             {"support_vectors", m.support_vectors}});
  }
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << j.dump(1) << "\n";
  if (!os) throw Error("failed writing svm model to " + path);
}

inline SvmModel load_svm_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open svm model " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": invalid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "statekit-svm" || j.at("version") != 1) {
      throw FormatError(path + ": not a version-1 svm model file");
    }
    SvmModel model;
    model.kernel.kind = kernel_kind_from_name(j.at("kernel").at("kind"));
    model.kernel.gamma = j.at("kernel").at("gamma");
    model.C = j.at("C");
    model.classes = j.at("classes").get<std::vector<int>>();
    model.feature_mean = j.at("feature_mean").get<std::vector<double>>();
    model.feature_std = j.at("feature_std").get<std::vector<double>>();
    if (model.feature_std.size() != model.feature_mean.size()) {
      throw FormatError(path + ": feature_mean and feature_std lengths differ");
    }
    for (double s : model.feature_std) {
      if (s <= 0.0) throw FormatError(path + ": feature_std entries must be positive");
    }
    for (const auto& jb : j.at("binaries")) {
      BinarySvm m;
      m.class_a = jb.at("class_a");
      m.class_b = jb.at("class_b");
      m.bias = jb.at("bias");
      m.alphas = jb.at("alphas").get<std::vector<double>>();
      m.ys = jb.at("ys").get<std::vector<int>>();
      m.support_vectors = jb.at("support_vectors").get<std::vector<std::vector<double>>>();
      if (m.alphas.size() != m.ys.size() || m.alphas.size() != m.support_vectors.size()) {
        throw FormatError(path + ": inconsistent support vector arrays");
      }
      for (double a : m.alphas) {
        if (!(a > 0.0) || a > model.C + 1e-9) {
          throw FormatError(path + ": dual coefficient outside (0, C]");
        }
      }
      for (int y : m.ys) {
        if (y != 1 && y != -1) throw FormatError(path + ": support vector label must be +-1");
      }
      for (const auto& sv : m.support_vectors) {
        if (sv.size() != model.feature_mean.size()) {
          throw FormatError(path + ": support vector dimension mismatch");
        }
      }
      model.binaries.push_back(std::move(m));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": missing or mistyped field: " + e.what());
  }
}

}  // namespace statekit
