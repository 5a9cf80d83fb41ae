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

// Item embeddings and the aggregation rules built on them: restaurant and
// collection vectors as (two-level) normalized means, per-shift user anchors,
// cosine similarity, and the regional-vs-unified variability measure.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "red/common.hpp"
#include "red/marketplace.hpp"

namespace red {

using Vector = std::vector<double>;

// Unit-norm f32 vector per dish. Immutable once built.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  // `data` holds ids.size() rows of `dim` floats, row i belonging to ids[i].
  EmbeddingStore(std::size_t dim, std::vector<DishId> ids, std::vector<float> data);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<DishId>& ids() const { return ids_; }
  bool contains(DishId id) const { return index_.contains(id); }
  // Throws MissingEmbeddingError if the dish has no vector.
  std::span<const float> vector(DishId id) const;
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  bool operator==(const EmbeddingStore& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<DishId> ids_;
  std::vector<float> data_;
  std::unordered_map<DishId, std::size_t> index_;
};

struct EmbeddingConfig {
  std::uint32_t dim = 16;
  // Per-component noise added to the taxonomy centroid.
  double sigma = 0.35;
  double recency_half_life_days = 30.0;
};

// Synthetic stand-in for a retrieval model: every taxonomy gets a random unit
// centroid and each dish is normalize(centroid + sigma * N(0, I)).
EmbeddingStore build_item_embeddings(const Marketplace& market, std::size_t dim, double sigma,
                                     std::uint64_t seed);

// Throws UndefinedSimilarityError on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const float> b);

// Normalized mean of the restaurant's embedded dishes.
Vector restaurant_embedding(const Restaurant& restaurant, const EmbeddingStore& store);

struct EmbeddingScope {
  bool regional = false;
  RegionId region;

  static EmbeddingScope unified() { return {}; }
  static EmbeddingScope in_region(RegionId r) { return {true, r}; }
  bool operator==(const EmbeddingScope&) const = default;
};

struct CollectionRepresentation {
  CollectionId collection;
  Vector vector;
  EmbeddingScope scope;
};

// Dish collections: normalized mean of member dishes. Restaurant collections:
// normalized mean of restaurant_embedding outputs. Regional scope keeps only
// members located in the region (EmptyRegionError if none).
CollectionRepresentation collection_embedding(const Collection& collection,
                                              const Marketplace& market,
                                              const EmbeddingStore& store,
                                              EmbeddingScope scope = EmbeddingScope::unified());

struct AnchorItem {
  DishId dish;
  TaxonomyId taxonomy;
  std::vector<float> vector;
};

struct UserShiftRepresentation {
  UserId user;
  MealShift shift = MealShift::kDawn;
  // 1..3 anchors with pairwise distinct taxonomies, strongest first.
  std::vector<AnchorItem> anchors;
};

inline double recency_decay_per_day(double half_life_days) {
  return 0.6931471805599453 / half_life_days;
}

// Scores each ordered dish in `shift` by sum(exp(-decay * age_days)) over its
// orders placed before `now`; a taxonomy scores the sum of its dishes. Picks
// the best dish of each of the top three taxonomies. Ties break on the lower
// id. Returns nullopt when the user has no orders in the shift.
std::optional<UserShiftRepresentation> user_shift_representation(
    const User& user, MealShift shift, const Marketplace& market, const EmbeddingStore& store,
    Timestamp now, double decay_per_day);

// Median over regions of cosine(regional vector, unified vector).
double regional_variability(const Collection& collection, const Marketplace& market,
                            const EmbeddingStore& store);

// Regions in which the collection has at least one member, ascending.
std::vector<RegionId> collection_regions(const Collection& collection, const Marketplace& market);

// Binary layout (little-endian):
//   char[8]  magic "REDEMBED"
//   u32      version (1)
//   u32      dim
//   u64      count
//   count x { u64 dish_id; f32[dim] }
void save_embeddings(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_embeddings(const std::string& path);
std::vector<std::byte> encode_embeddings(const EmbeddingStore& store);
EmbeddingStore decode_embeddings(std::span<const std::byte> bytes);
// One line per dish: id followed by tab-separated components.
void export_embeddings_text(const EmbeddingStore& store, std::ostream& out);

}  // namespace red
