/*
 * Copyright 2026 The RED Collections Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Gradient-boosted regression trees for binary classification.
//
// Logistic loss, second-order leaf values -G/(H+lambda), leaf-wise
// (best-gain-first) growth over quantile histograms, learned default
// directions for missing values, and per-feature monotone constraints.
//
// Monotone constraints are enforced during growth. Every node carries an
// output interval [lower, upper]; leaf values are clipped to it. A split on a
// feature with flag +1 is admissible only if value(left) <= value(right)
// (reversed for -1), and the children then split the parent's interval at
// the midpoint of the two child values. Any two leaves separated by such a
// split therefore stay ordered, which makes the ensemble's raw score
// monotone in that feature for every fixed setting of the others.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "red/schema.hpp"

namespace red {

struct GbdtParams {
  std::uint32_t n_trees = 200;
  double learning_rate = 0.1;
  std::uint32_t max_leaves = 31;
  std::uint32_t min_samples_leaf = 20;
  double l2_leaf_penalty = 1.0;
  std::uint32_t n_bins = 64;
  // Empty means "take the flags from the schema".
  std::vector<int> monotone;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct TreeNode {
  static constexpr std::int32_t kLeaf = -1;

  std::int32_t feature = kLeaf;
  double threshold = 0.0;  // value <= threshold goes left
  bool default_left = true;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  // Leaf output (log-odds, before the learning rate).
  double value = 0.0;
  // Loss reduction of the split; zero on leaves.
  double gain = 0.0;

  bool is_leaf() const { return feature == kLeaf; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double evaluate(std::span<const double> x) const;
  bool operator==(const Tree&) const = default;
};

class GbdtModel {
 public:
  GbdtModel() = default;
  GbdtModel(FeatureSchema schema, GbdtParams params, double base_score, std::vector<Tree> trees);

  const FeatureSchema& schema() const { return schema_; }
  std::uint64_t schema_fingerprint() const { return schema_.fingerprint(); }
  const GbdtParams& params() const { return params_; }
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }

  // base_score + sum(learning_rate * tree(x)), no schema check.
  double raw_score(std::span<const double> x) const;
  // sigmoid(raw_score). Row width must equal the schema size.
  double predict_row(std::span<const double> x) const;
  // Refuses vectors built under a different schema (SchemaError).
  double predict(const FeatureVector& fv) const;

  bool operator==(const GbdtModel& other) const {
    return schema_ == other.schema_ && base_score_ == other.base_score_ && trees_ == other.trees_;
  }

 private:
  FeatureSchema schema_;
  GbdtParams params_;
  double base_score_ = 0.0;
  std::vector<Tree> trees_;
};

// Row-major design matrix with binary labels.
struct TrainingData {
  const FeatureSchema* schema = nullptr;
  std::span<const double> values;  // rows * schema->size()
  std::span<const std::uint8_t> labels;

  std::size_t rows() const { return labels.size(); }
};

// Called after each boosting round with the round index and training logloss.
using RoundObserver = std::function<void(std::size_t round, double train_logloss)>;

// Throws TrainingError on an empty or single-class dataset, SchemaError when
// the data width or the monotone flags disagree with the schema.
GbdtModel train(const TrainingData& data, const GbdtParams& params,
                const RoundObserver& observer = {});

double sigmoid(double x);
double logit(double p);

struct LogisticDerivatives {
  double gradient;  // p - y
  double hessian;   // p (1 - p)
};
// First and second derivative of the logistic loss w.r.t. the raw score.
LogisticDerivatives logistic_derivatives(double raw_score, double label);
// -[y log p + (1 - y) log(1 - p)] with p = sigmoid(raw_score), computed stably.
double logistic_loss(double raw_score, double label);

struct FeatureImportance {
  std::uint64_t split_count = 0;
  double total_gain = 0.0;
};
std::map<std::string, FeatureImportance> feature_importance(const GbdtModel& model);

// Quantile bin boundaries for one column (NaNs ignored). Values
// v <= boundaries[b] and > boundaries[b-1] fall in bin b.
std::vector<double> bin_boundaries(std::span<const double> column, std::uint32_t n_bins);

// ---------------------------------------------------------------------------
// Model file, version 1.0 (all integers and floats little-endian):
//
//   char[8]  magic "REDGBDT\0"
//   u16      major version (1)      u16 minor version (0)
//   u64      schema fingerprint
//   u32      schema text length     bytes  FeatureSchema::serialize()
//   u32 n_trees  f64 learning_rate  u32 max_leaves  u32 min_samples_leaf
//   f64 l2_leaf_penalty  u32 n_bins  u64 seed
//   u32      monotone flag count    i8[count]
//   f64      base_score
//   u32      tree count
//   per tree: u32 node count, then per node:
//     u8 kind (0 = internal, 1 = leaf)
//     internal: i32 feature, f64 threshold, u8 default_left,
//               u32 left, u32 right, f64 gain
//     leaf:     f64 value
//   u64      FNV-1a 64 checksum of every preceding byte
//
// predict(x) = sigmoid(base_score + sum_t learning_rate * leaf_t(x)); at an
// internal node x[feature] <= threshold goes left, NaN follows default_left.
inline constexpr std::uint16_t kModelMajorVersion = 1;
inline constexpr std::uint16_t kModelMinorVersion = 0;

std::vector<std::byte> encode_model(const GbdtModel& model);
// Throws VersionError for a newer major version, CorruptFileError otherwise.
GbdtModel decode_model(std::span<const std::byte> bytes);
void save_model(const GbdtModel& model, const std::string& path);
GbdtModel load_model(const std::string& path);

}  // namespace red
