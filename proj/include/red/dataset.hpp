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


// Labeled pair datasets built from session logs.
//
// Every purchase yields one positive row (the purchased collection) and one
// negative row (a co-displayed collection from the same session and home),
// so datasets are balanced by construction. Rows 2p and 2p+1 are the
// positive and negative of pair p.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "red/boost.hpp"
#include "red/features.hpp"
#include "red/marketplace.hpp"

namespace red {

enum class Provenance : std::uint8_t { kCarousel, kSampled };
std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view s);

struct LabeledPair {
  UserId user;
  Context context;
  CollectionId positive;
  CollectionId negative;
  HomeId home;
  Provenance provenance = Provenance::kSampled;
  // Index of the originating session in its log.
  std::uint64_t session = 0;
};

struct RowMeta {
  std::uint32_t pair = 0;
  UserId user;
  CollectionId collection;
  HomeId home;
  MealShift shift = MealShift::kDawn;
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(FeatureSchema schema) : schema_(std::move(schema)) {}

  const FeatureSchema& schema() const { return schema_; }
  std::size_t rows() const { return labels_.size(); }
  std::size_t width() const { return schema_.size(); }
  const std::vector<LabeledPair>& pairs() const { return pairs_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::vector<RowMeta>& meta() const { return meta_; }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * width(), width());
  }
  // Provenances present in the dataset.
  const std::vector<Provenance>& provenances() const { return provenances_; }

  // Appends the positive and negative rows of `pair`.
  void add_pair(const LabeledPair& pair, std::span<const double> positive_row,
                std::span<const double> negative_row);

  TrainingData training_data() const { return {&schema_, values_, labels_}; }
  // Same rows restricted to `subset`'s columns.
  LabeledDataset project(const FeatureSchema& subset) const;
  // Rows of the selected pairs, in the given order.
  LabeledDataset select_pairs(std::span<const std::uint32_t> pair_ids) const;

  bool operator==(const LabeledDataset& other) const;

 private:
  friend LabeledDataset merge_datasets(const LabeledDataset&, const LabeledDataset&, bool);
  friend LabeledDataset read_dataset(const std::string&);
  void note_provenance(Provenance p);

  FeatureSchema schema_;
  std::vector<double> values_;
  std::vector<std::uint8_t> labels_;
  std::vector<RowMeta> meta_;
  std::vector<LabeledPair> pairs_;
  std::vector<Provenance> provenances_;
};

// Carousel bootstrap: for each carousel session with a purchase, the purchased
// category is positive and one other displayed category, drawn uniformly, is
// negative. Sessions with a single displayed category are skipped.
LabeledDataset build_carousel_dataset(std::span<const SessionEvent> log,
                                      const FeatureExtractor& extractor, std::uint64_t seed);

// Exploration-sampled pairs: only flagged sessions with a purchase on the
// RED surface; the other displayed collection is the negative.
LabeledDataset build_unbiased_dataset(std::span<const SessionEvent> log,
                                      const FeatureExtractor& extractor);

// Concatenates two datasets with the same schema. Mixing carousel and
// sampled rows requires allow_mixed_provenance (ConfigError otherwise).
LabeledDataset merge_datasets(const LabeledDataset& a, const LabeledDataset& b,
                              bool allow_mixed_provenance);

// With probability `rate` shows a uniformly drawn unordered pair of eligible
// collections, flagged as exploration; otherwise defers to the incumbent.
class ExplorationPolicy final : public DisplayPolicy {
 public:
  ExplorationPolicy(double rate, std::shared_ptr<const DisplayPolicy> incumbent);
  Display choose(const User& user, const Context& ctx, std::span<const CollectionId> eligible,
                 Rng& rng) const override;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::shared_ptr<const DisplayPolicy> incumbent_;
};

inline constexpr double kDefaultExplorationRate = 0.005;

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset test;
};

// User-disjoint split: round(holdout_fraction * users) users, drawn with
// `seed`, go to the test side together with all their pairs.
DatasetSplit split_dataset(const LabeledDataset& ds, double holdout_fraction, std::uint64_t seed);

struct BalanceCount {
  std::uint64_t positives = 0;
  std::uint64_t rows = 0;
};

// Result of re-checking the balance and locality invariants by scanning the
// dataset against the log it was built from.
struct DatasetAudit {
  BalanceCount global;
  std::map<std::uint32_t, BalanceCount> per_home;
  std::uint64_t locality_violations = 0;
  std::uint64_t pairing_violations = 0;

  bool ok() const;
};
DatasetAudit audit_dataset(const LabeledDataset& ds, std::span<const SessionEvent> log);

// On-disk layout (a directory):
//   schema.tsv    FeatureSchema::serialize()
//   features.tsv  header "pair user collection home shift label <name>:<monotone>..."
//                 then one row per line; missing values are "NA", numbers %.17g
//   pairs.tsv     pair user home shift timestamp region positive negative
//                 provenance session
void write_dataset(const LabeledDataset& ds, const std::string& dir);
LabeledDataset read_dataset(const std::string& dir);

}  // namespace red
