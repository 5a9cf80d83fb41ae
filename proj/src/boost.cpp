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

#include "red/boost.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace red {

void GbdtParams::validate() const {
  if (n_trees < 1) throw ConfigError("boost.n_trees must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("boost.learning_rate must be in (0, 1]");
  }
  if (max_leaves < 2) throw ConfigError("boost.max_leaves must be >= 2");
  if (min_samples_leaf < 1) throw ConfigError("boost.min_samples_leaf must be >= 1");
  if (!(l2_leaf_penalty >= 0.0)) throw ConfigError("boost.l2_leaf_penalty must be >= 0");
  if (n_bins < 2 || n_bins > 255) throw ConfigError("boost.n_bins must be in [2, 255]");
  for (int m : monotone) {
    if (m < -1 || m > 1) throw ConfigError("boost.monotone flags must be -1, 0 or +1");
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

LogisticDerivatives logistic_derivatives(double raw_score, double label) {
  const double p = sigmoid(raw_score);
  return {p - label, p * (1.0 - p)};
}

double logistic_loss(double raw_score, double label) {
  // log(1 + e^s) - y s, with a stable softplus.
  const double softplus =
      raw_score > 0.0 ? raw_score + std::log1p(std::exp(-raw_score)) : std::log1p(std::exp(raw_score));
  return softplus - label * raw_score;
}

double Tree::evaluate(std::span<const double> x) const {
  std::uint32_t i = 0;
  for (;;) {
    const TreeNode& n = nodes[i];
    if (n.is_leaf()) return n.value;
    const double v = x[static_cast<std::size_t>(n.feature)];
    if (std::isnan(v)) {
      i = n.default_left ? n.left : n.right;
    } else {
      i = v <= n.threshold ? n.left : n.right;
    }
  }
}

GbdtModel::GbdtModel(FeatureSchema schema, GbdtParams params, double base_score,
                     std::vector<Tree> trees)
    : schema_(std::move(schema)),
      params_(std::move(params)),
      base_score_(base_score),
      trees_(std::move(trees)) {}

double GbdtModel::raw_score(std::span<const double> x) const {
  double s = base_score_;
  for (const auto& t : trees_) s += params_.learning_rate * t.evaluate(x);
  return s;
}

double GbdtModel::predict_row(std::span<const double> x) const {
  if (x.size() != schema_.size()) {
    throw SchemaError("feature row has " + std::to_string(x.size()) + " values, model expects " +
                      std::to_string(schema_.size()));
  }
  return sigmoid(raw_score(x));
}

double GbdtModel::predict(const FeatureVector& fv) const {
  if (fv.schema_fingerprint != schema_.fingerprint()) {
    throw SchemaError("feature vector schema " + hex64(fv.schema_fingerprint) +
                      " does not match model schema " + hex64(schema_.fingerprint()));
  }
  return predict_row(fv.values);
}

std::vector<double> bin_boundaries(std::span<const double> column, std::uint32_t n_bins) {
  std::vector<double> v;
  v.reserve(column.size());
  for (double x : column) {
    if (!std::isnan(x)) v.push_back(x);
  }
  std::vector<double> out;
  if (v.empty()) return out;
  std::sort(v.begin(), v.end());
  auto midpoint = [](double a, double b) {
    const double m = a + (b - a) / 2.0;
    return (m >= a && m < b) ? m : a;
  };
  std::vector<double> distinct = v;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() <= n_bins) {
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
      out.push_back(midpoint(distinct[i], distinct[i + 1]));
    }
    return out;
  }
  for (std::uint32_t k = 1; k < n_bins; ++k) {
    const double q = v[k * v.size() / n_bins];
    const auto next = std::upper_bound(distinct.begin(), distinct.end(), q);
    if (next == distinct.end()) break;
    const double b = midpoint(q, *next);
    if (out.empty() || b > out.back()) out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Stats {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t n = 0;

  Stats& operator+=(const Stats& o) {
    g += o.g;
    h += o.h;
    n += o.n;
    return *this;
  }
  Stats operator-(const Stats& o) const { return {g - o.g, h - o.h, n - o.n}; }
};

struct Bounds {
  double lower = -kInf;
  double upper = kInf;
};

double leaf_value(const Stats& s, double lambda, const Bounds& b) {
  return std::clamp(-s.g / (s.h + lambda), b.lower, b.upper);
}

// Loss reduction achieved by a leaf with output w relative to output 0,
// under the second-order approximation. Equals G^2 / (2(H+lambda)) at the
// unconstrained optimum.
double leaf_objective(const Stats& s, double lambda, const Bounds& b) {
  const double denom = s.h + lambda;
  const double w = -s.g / denom;
  if (w >= b.lower && w <= b.upper) return 0.5 * (s.g * s.g) / denom;
  const double c = std::clamp(w, b.lower, b.upper);
  return -(s.g * c + 0.5 * denom * c * c);
}

struct SplitCandidate {
  bool valid = false;
  std::uint32_t feature = 0;
  std::uint32_t bin = 0;  // left = bins <= bin
  bool default_left = true;
  double gain = 0.0;
  Stats left;
  Stats right;
  double left_value = 0.0;
  double right_value = 0.0;
};

struct LeafState {
  std::uint32_t node = 0;
  std::vector<std::uint32_t> rows;
  Stats total;
  Bounds bounds;
  SplitCandidate best;
};

class TreeGrower {
 public:
  TreeGrower(const std::vector<std::vector<std::uint8_t>>& bins,
             const std::vector<std::vector<double>>& boundaries, const std::vector<int>& monotone,
             const GbdtParams& params)
      : bins_(bins), boundaries_(boundaries), monotone_(monotone), params_(params) {}

  // Grows one tree; returns it with per-row leaf outputs in `row_output`.
  Tree grow(std::span<const double> grad, std::span<const double> hess,
            std::vector<double>& row_output) {
    const auto n_rows = static_cast<std::uint32_t>(grad.size());
    grad_ = grad;
    hess_ = hess;
    Tree tree;
    std::vector<LeafState> leaves;
    {
      LeafState root;
      root.rows.resize(n_rows);
      for (std::uint32_t i = 0; i < n_rows; ++i) root.rows[i] = i;
      root.total = sum(root.rows);
      root.node = 0;
      tree.nodes.push_back(TreeNode{});
      tree.nodes[0].value = leaf_value(root.total, params_.l2_leaf_penalty, root.bounds);
      root.best = find_best_split(root);
      leaves.push_back(std::move(root));
    }

    while (leaves.size() < params_.max_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!leaves[i].best.valid) continue;
        if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
      }
      if (pick == leaves.size()) break;
      auto [left, right] = split(tree, leaves[pick]);
      leaves[pick] = std::move(left);
      leaves.push_back(std::move(right));
      leaves[pick].best = find_best_split(leaves[pick]);
      leaves.back().best = find_best_split(leaves.back());
    }

    row_output.assign(n_rows, 0.0);
    for (const auto& leaf : leaves) {
      const double v = tree.nodes[leaf.node].value;
      for (auto r : leaf.rows) row_output[r] = v;
    }
    return tree;
  }

 private:
  Stats sum(const std::vector<std::uint32_t>& rows) const {
    Stats s;
    for (auto r : rows) {
      s.g += grad_[r];
      s.h += hess_[r];
      ++s.n;
    }
    return s;
  }

  SplitCandidate find_best_split(const LeafState& leaf) const {
    SplitCandidate best;
    const double lambda = params_.l2_leaf_penalty;
    const double parent_obj = leaf_objective(leaf.total, lambda, leaf.bounds);
    const std::uint32_t min_leaf = params_.min_samples_leaf;
    if (leaf.total.n < 2 * min_leaf) return best;

    std::vector<Stats> hist;
    for (std::uint32_t f = 0; f < bins_.size(); ++f) {
      const auto n_numeric = static_cast<std::uint32_t>(boundaries_[f].size() + 1);
      if (n_numeric < 2) continue;
      const std::uint32_t missing_bin = n_numeric;
      hist.assign(n_numeric + 1, Stats{});
      const auto& col = bins_[f];
      for (auto r : leaf.rows) {
        auto& h = hist[col[r]];
        h.g += grad_[r];
        h.h += hess_[r];
        ++h.n;
      }
      const Stats missing = hist[missing_bin];
      const int mono = monotone_[f];
      Stats cum;
      for (std::uint32_t b = 0; b + 1 < n_numeric; ++b) {
        cum += hist[b];
        for (int dir = 0; dir < 2; ++dir) {
          const bool missing_left = dir == 0;
          Stats left = cum;
          if (missing_left) left += missing;
          const Stats right = leaf.total - left;
          if (left.n < min_leaf || right.n < min_leaf) continue;
          const double wl = leaf_value(left, lambda, leaf.bounds);
          const double wr = leaf_value(right, lambda, leaf.bounds);
          if ((mono > 0 && wl > wr) || (mono < 0 && wl < wr)) continue;
          const double gain = leaf_objective(left, lambda, leaf.bounds) +
                              leaf_objective(right, lambda, leaf.bounds) - parent_obj;
          if (!(gain > 0.0)) continue;
          if (!best.valid || gain > best.gain) {
            best = SplitCandidate{true, f, b, missing_left, gain, left, right, wl, wr};
          }
        }
      }
    }
    return best;
  }

  std::pair<LeafState, LeafState> split(Tree& tree, LeafState& leaf) {
    const SplitCandidate s = leaf.best;
    const auto& col = bins_[s.feature];
    const auto missing_bin = static_cast<std::uint8_t>(boundaries_[s.feature].size() + 1);
    LeafState left;
    LeafState right;
    for (auto r : leaf.rows) {
      const auto b = col[r];
      const bool go_left = b == missing_bin ? s.default_left : b <= s.bin;
      (go_left ? left.rows : right.rows).push_back(r);
    }
    left.total = s.left;
    right.total = s.right;

    left.bounds = leaf.bounds;
    right.bounds = leaf.bounds;
    const int mono = monotone_[s.feature];
    if (mono != 0) {
      const double mid = 0.5 * (s.left_value + s.right_value);
      if (mono > 0) {
        left.bounds.upper = mid;
        right.bounds.lower = mid;
      } else {
        left.bounds.lower = mid;
        right.bounds.upper = mid;
      }
    }

    left.node = static_cast<std::uint32_t>(tree.nodes.size());
    right.node = left.node + 1;
    TreeNode& parent = tree.nodes[leaf.node];
    parent.feature = static_cast<std::int32_t>(s.feature);
    parent.threshold = boundaries_[s.feature][s.bin];
    parent.default_left = s.default_left;
    parent.left = left.node;
    parent.right = right.node;
    parent.gain = s.gain;
    parent.value = 0.0;

    TreeNode l;
    l.value = leaf_value(left.total, params_.l2_leaf_penalty, left.bounds);
    TreeNode r;
    r.value = leaf_value(right.total, params_.l2_leaf_penalty, right.bounds);
    tree.nodes.push_back(l);
    tree.nodes.push_back(r);
    return {std::move(left), std::move(right)};
  }

  const std::vector<std::vector<std::uint8_t>>& bins_;
  const std::vector<std::vector<double>>& boundaries_;
  const std::vector<int>& monotone_;
  const GbdtParams& params_;
  std::span<const double> grad_;
  std::span<const double> hess_;
};

}  // namespace

GbdtModel train(const TrainingData& data, const GbdtParams& params_in, const RoundObserver& observer) {
  params_in.validate();
  if (data.schema == nullptr) throw SchemaError("training data has no schema");
  const FeatureSchema& schema = *data.schema;
  const std::size_t n_rows = data.rows();
  const std::size_t n_features = schema.size();
  if (n_rows == 0) throw TrainingError("cannot train on an empty dataset");
  if (n_features == 0) throw SchemaError("cannot train with an empty schema");
  if (data.values.size() != n_rows * n_features) {
    throw SchemaError("training matrix width does not match the schema");
  }
  GbdtParams params = params_in;
  if (params.monotone.empty()) {
    params.monotone = schema.monotone();
  } else if (params.monotone != schema.monotone()) {
    throw SchemaError("monotone flags in params disagree with the feature schema");
  }

  std::size_t positives = 0;
  for (auto y : data.labels) {
    if (y > 1) throw TrainingError("labels must be 0 or 1");
    positives += y;
  }
  if (positives == 0 || positives == n_rows) {
    throw TrainingError("training data must contain both classes");
  }

  // Column-wise quantization.
  std::vector<std::vector<double>> boundaries(n_features);
  std::vector<std::vector<std::uint8_t>> bins(n_features, std::vector<std::uint8_t>(n_rows));
  std::vector<double> column(n_rows);
  for (std::size_t f = 0; f < n_features; ++f) {
    for (std::size_t r = 0; r < n_rows; ++r) column[r] = data.values[r * n_features + f];
    boundaries[f] = bin_boundaries(column, params.n_bins);
    const auto missing_bin = static_cast<std::uint8_t>(boundaries[f].size() + 1);
    for (std::size_t r = 0; r < n_rows; ++r) {
      const double x = column[r];
      bins[f][r] = std::isnan(x) ? missing_bin
                                 : static_cast<std::uint8_t>(std::lower_bound(boundaries[f].begin(),
                                                                              boundaries[f].end(), x) -
                                                             boundaries[f].begin());
    }
  }

  const double base = logit(static_cast<double>(positives) / static_cast<double>(n_rows));
  std::vector<double> score(n_rows, base);
  std::vector<double> grad(n_rows);
  std::vector<double> hess(n_rows);
  std::vector<double> out;
  std::vector<Tree> trees;
  trees.reserve(params.n_trees);
  TreeGrower grower(bins, boundaries, params.monotone, params);

  for (std::uint32_t round = 0; round < params.n_trees; ++round) {
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto d = logistic_derivatives(score[r], data.labels[r]);
      grad[r] = d.gradient;
      hess[r] = std::max(d.hessian, 1e-16);
    }
    trees.push_back(grower.grow(grad, hess, out));
    for (std::size_t r = 0; r < n_rows; ++r) score[r] += params.learning_rate * out[r];
    if (observer) {
      double loss = 0.0;
      for (std::size_t r = 0; r < n_rows; ++r) loss += logistic_loss(score[r], data.labels[r]);
      observer(round, loss / static_cast<double>(n_rows));
    }
  }
  return GbdtModel(schema, std::move(params), base, std::move(trees));
}

std::map<std::string, FeatureImportance> feature_importance(const GbdtModel& model) {
  std::map<std::string, FeatureImportance> out;
  const auto& schema = model.schema();
  for (const auto& f : schema.features()) out[f.name] = {};
  for (const auto& t : model.trees()) {
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) continue;
      auto& imp = out[schema[static_cast<std::size_t>(n.feature)].name];
      ++imp.split_count;
      imp.total_gain += n.gain;
    }
  }
  return out;
}

}  // namespace red
