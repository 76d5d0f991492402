#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "statekit/errors.hpp"
#include "statekit/rng.hpp"

namespace statekit {

// The eleven state classes, in fixed alphabetical order so label ids are
// stable across runs and platforms.
inline constexpr int kNumClasses = 11;
inline constexpr std::array<const char*, kNumClasses> kStateNames = {
    "creamy paste", "diced",  "floured", "grated", "juiced", "julienne",
    "mixed",        "other",  "peeled",  "sliced", "whole"};

inline std::string valid_label_list() {
  std::string s;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i) s += ", ";
    s += kStateNames[i];
  }
  return s;
}

inline int label_id_from_name(const std::string& name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (name == kStateNames[i]) return i;
  }
  throw DataError("unknown label \"" + name + "\"; valid labels are: " + valid_label_list());
}

inline std::string label_name(int id) {
  if (id < 0 || id >= kNumClasses) {
    throw DataError("label id " + std::to_string(id) + " outside [0," +
                    std::to_string(kNumClasses - 1) + "]");
  }
  return kStateNames[static_cast<size_t>(id)];
}

enum class Split { unassigned, train, val, test };

inline std::string split_to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "";
  }
  return "";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s.empty()) return Split::unassigned;
  throw DataError("unknown split \"" + s + "\" (expected train, val, test or empty)");
}

struct LabeledSample {
  std::string path;  // relative to the manifest root
  int label = 0;
  Split split = Split::unassigned;
};

struct DatasetManifest {
  std::string root;
  std::vector<LabeledSample> samples;

  std::vector<size_t> indices_of(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].split == s) out.push_back(i);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string dirname_of(const std::string& path) {
  const auto slash = path.find_last_of('/');
  if (slash == std::string::npos) return ".";
  if (slash == 0) return "/";
  return path.substr(0, slash);
}

}  // namespace detail

// Reads a manifest CSV. Header must be `path,label,split` (the split column
// may be omitted entirely); empty split values mean "not yet assigned".
inline DatasetManifest load_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open manifest: " + csv_path);

  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest is empty: " + csv_path);
  const auto header = detail::split_csv_line(line);
  const bool has_split_col = header.size() == 3 && header[2] == "split";
  if (!(header.size() >= 2 && header[0] == "path" && header[1] == "label" &&
        (header.size() == 2 || has_split_col))) {
    throw FormatError("manifest header must be `path,label,split` (got \"" + line + "\")");
  }

  DatasetManifest manifest;
  manifest.root = detail::dirname_of(csv_path);
  std::set<std::string> seen;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < 2 || fields.size() > 3) {
      throw FormatError("manifest row " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, expected 2 or 3");
    }
    LabeledSample sample;
    sample.path = fields[0];
    if (sample.path.empty()) {
      throw DataError("manifest row " + std::to_string(row) + ": empty path");
    }
    try {
      sample.label = label_id_from_name(fields[1]);
    } catch (const DataError& e) {
      throw DataError("manifest row " + std::to_string(row) + ": " + e.what());
    }
    sample.split = fields.size() == 3 ? split_from_string(fields[2]) : Split::unassigned;
    if (!seen.insert(sample.path).second) {
      throw DataError("manifest row " + std::to_string(row) + ": duplicate path \"" +
                      sample.path + "\"");
    }
    manifest.samples.push_back(std::move(sample));
  }
  return manifest;
}

inline void save_manifest(const DatasetManifest& manifest, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + csv_path);
  out << "path,label,split\n";
  for (const auto& s : manifest.samples) {
    out << s.path << "," << label_name(s.label) << "," << split_to_string(s.split) << "\n";
  }
}

// Deterministic per-class stratified split. For every class the shuffled
// sample list is apportioned by largest remainder, so each class's counts
// match the fractions within one sample. Identical (manifest, fractions,
// seed) give identical assignments on every platform.
inline DatasetManifest split_manifest(const DatasetManifest& manifest, double train_frac,
                                      double val_frac, double test_frac, uint64_t seed) {
  if (train_frac <= 0.0 || val_frac <= 0.0 || test_frac <= 0.0) {
    throw DataError("split fractions must all be positive");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw DataError("split fractions must sum to 1");
  }

  std::map<int, std::vector<size_t>> by_class;
  for (size_t i = 0; i < manifest.samples.size(); ++i) {
    by_class[manifest.samples[i].label].push_back(i);
  }
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < 3) {
      throw DataError("class \"" + label_name(label) + "\" has only " +
                      std::to_string(idx.size()) + " samples; need at least 3 to stratify");
    }
  }

  DatasetManifest out = manifest;
  for (auto& [label, idx] : by_class) {
    Rng rng(derive_seed(seed, "split", static_cast<uint64_t>(label)));
    shuffle(idx, rng);

    const double n = static_cast<double>(idx.size());
    const double ideal[3] = {n * train_frac, n * val_frac, n * test_frac};
    size_t counts[3];
    double rema[3];
    size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      counts[k] = static_cast<size_t>(std::floor(ideal[k]));
      rema[k] = ideal[k] - std::floor(ideal[k]);
      assigned += counts[k];
    }
    // leftover goes to the largest remainders; ties resolve train, val, test
    while (assigned < idx.size()) {
      int best = 0;
      for (int k = 1; k < 3; ++k) {
        if (rema[k] > rema[best]) best = k;
      }
      counts[best] += 1;
      rema[best] = -1.0;
      ++assigned;
    }

    size_t p = 0;
    const Split order[3] = {Split::train, Split::val, Split::test};
    for (int k = 0; k < 3; ++k) {
      for (size_t c = 0; c < counts[k]; ++c, ++p) {
        out.samples[idx[p]].split = order[k];
      }
    }
  }
  return out;
}

}  // namespace statekit
