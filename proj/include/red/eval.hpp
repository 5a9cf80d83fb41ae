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


// Offline pairwise accuracy and the simulated online A/B harness.

#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "red/boost.hpp"
#include "red/dataset.hpp"
#include "red/features.hpp"
#include "red/marketplace.hpp"

namespace red {

// Scores one feature row. Higher means more likely to be bought.
using RowScorer = std::function<double(const RowMeta& meta, std::span<const double> row)>;

// Model probability; columns are picked by name from `data_schema`.
RowScorer model_scorer(std::shared_ptr<const GbdtModel> model, const FeatureSchema& data_schema);
// Orders of the collection in the row's shift over the statistics window.
RowScorer popularity_scorer(const FeatureExtractor& extractor);
// Latent ground-truth affinity, and its negation.
RowScorer oracle_scorer(std::shared_ptr<const ChoiceModel> choice);
RowScorer anti_oracle_scorer(std::shared_ptr<const ChoiceModel> choice);

struct AccuracyCell {
  std::uint64_t n_pairs = 0;
  double correct = 0.0;  // ties count one half
  double accuracy() const { return n_pairs == 0 ? 0.0 : correct / static_cast<double>(n_pairs); }
};

struct EvalReport {
  std::string model_id;
  double pairwise_accuracy = 0.0;
  std::uint64_t n_pairs = 0;
  double correct = 0.0;
  std::map<std::uint32_t, AccuracyCell> per_home;
  std::array<AccuracyCell, kNumShifts> per_shift{};

  nlohmann::json to_json() const;
};

// A pair is correct when the positive row scores strictly higher; equal
// scores count 0.5.
EvalReport pairwise_accuracy(const LabeledDataset& test, const RowScorer& scorer,
                             const std::string& model_id);
// Refuses a model whose features are not all present in the dataset schema.
EvalReport pairwise_accuracy(const GbdtModel& model, const LabeledDataset& test,
                             const std::string& model_id);

// Descending by score, ties by ascending collection id.
std::vector<CollectionId> rank_collections(std::span<const CollectionId> eligible,
                                           const std::function<double(CollectionId)>& score);

// Precomputed scores for every (user, shift, RED collection). Features come
// from a fixed snapshot, so a row is a function of these three keys.
class ScoreTable {
 public:
  ScoreTable() = default;
  ScoreTable(std::size_t users, std::size_t collections)
      : users_(users), collections_(collections), scores_(users * kNumShifts * collections, 0.0) {}

  double at(UserId u, MealShift s, CollectionId c) const { return scores_.at(offset(u, s, c)); }
  void set(UserId u, MealShift s, CollectionId c, double v) { scores_.at(offset(u, s, c)) = v; }
  std::size_t users() const { return users_; }
  std::size_t collections() const { return collections_; }

 private:
  std::size_t offset(UserId u, MealShift s, CollectionId c) const {
    return (u.index() * kNumShifts + shift_index(s)) * collections_ + c.index();
  }
  std::size_t users_ = 0;
  std::size_t collections_ = 0;
  std::vector<double> scores_;
};

ScoreTable build_score_table(const FeatureExtractor& extractor, const RowScorer& scorer);

// Shows the top k eligible collections by table score.
class RankingPolicy final : public DisplayPolicy {
 public:
  RankingPolicy(std::shared_ptr<const ScoreTable> table, std::size_t k = 3);
  Display choose(const User& user, const Context& ctx, std::span<const CollectionId> eligible,
                 Rng& rng) const override;

 private:
  std::shared_ptr<const ScoreTable> table_;
  std::size_t k_;
};

struct AbReport {
  std::string control_id;
  std::string variant_id;
  std::uint64_t sessions_control = 0;
  std::uint64_t sessions_variant = 0;
  std::uint64_t conversions_control = 0;
  std::uint64_t conversions_variant = 0;
  double ccr_control = 0.0;
  double ccr_variant = 0.0;
  double ccr_lift = 0.0;  // (variant - control) / control
  double z = 0.0;
  double p_value = 1.0;

  nlohmann::json to_json() const;
};

// Hash partition of the user base into two disjoint arms (0 control,
// 1 variant).
int arm_of(UserId user, std::uint64_t seed);
std::array<std::vector<UserId>, 2> assign_arms(const Marketplace& market, std::uint64_t seed);

// Splits n_sessions across the arms (control gets the odd one). Both arms
// replay the same per-session random streams; only users and policy differ.
AbReport simulate_ab_test(const DisplayPolicy& control, const DisplayPolicy& variant,
                          const Marketplace& market, std::size_t n_sessions, std::uint64_t seed,
                          const std::string& control_id = "control",
                          const std::string& variant_id = "variant");

struct TwoProportionTest {
  double z = 0.0;
  double p_value = 1.0;
};
TwoProportionTest two_proportion_z_test(std::uint64_t x1, std::uint64_t n1, std::uint64_t x2,
                                        std::uint64_t n2);
// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, double dof);

// Spearman correlation with average ranks for ties; NaN when either side is
// constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct LadderStep {
  std::string from;
  std::string to;
  double offline_diff = 0.0;  // accuracy points (x100)
  double ccr_lift = 0.0;      // relative
  AbReport ab;
};

struct CorrelationReport {
  std::vector<std::string> variants;
  std::vector<double> offline_accuracy;
  std::vector<LadderStep> steps;
  double rank_correlation = 0.0;

  bool signs_agree() const;
  nlohmann::json to_json() const;
};

struct LadderVariant {
  std::string id;
  RowScorer scorer;
};

// Consecutive pairs of `variants` (at least three): offline accuracy diff on
// `test` and simulated CCR lift of variant i+1 over variant i.
CorrelationReport offline_online_correlation(std::span<const LadderVariant> variants,
                                             const LabeledDataset& test,
                                             const FeatureExtractor& extractor,
                                             std::size_t n_sessions, std::uint64_t seed,
                                             std::size_t k = 3);

// Mean of per-seed reports over the same ladder; the rank correlation is
// recomputed on the averaged diffs and lifts.
CorrelationReport average_reports(std::span<const CorrelationReport> reports);

}  // namespace red
