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

// Feature rows for (user, collection, context) tuples.
//
// Three groups: collection-level aggregates (identical for every user),
// user-collection similarity, and context. Everything is computed from a
// snapshot taken at a fixed time, so a row depends on (user, collection,
// shift) only.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "red/embedding.hpp"
#include "red/marketplace.hpp"
#include "red/schema.hpp"

namespace red {

namespace feature_names {
inline constexpr const char* kPopularitySim = "collection_popularity_sim";
inline constexpr const char* kIsDishCollection = "is_dish_collection";
inline constexpr const char* kFreeDeliveryFraction = "free_delivery_order_fraction";
inline constexpr const char* kShiftSpecificity = "shift_specificity";
inline constexpr const char* kCollectionSize = "collection_size";
inline constexpr const char* kMeanDeliveryFee = "mean_delivery_fee";
inline constexpr const char* kOrderCountPopularity = "order_count_popularity";
inline constexpr const char* kSimilarity1 = "user_similarity_1";
inline constexpr const char* kSimilarity2 = "user_similarity_2";
inline constexpr const char* kSimilarity3 = "user_similarity_3";
inline constexpr const char* kUserOrdersInRestaurants = "user_orders_in_collection_restaurants";
inline constexpr const char* kVeganMatch = "vegan_match";
inline constexpr const char* kShiftOrdersPerRestaurant = "user_shift_orders_per_restaurant";
// One-hot context columns are "shift_is_<SHIFT>".
std::string shift_one_hot(MealShift s);
}  // namespace feature_names

// The frozen feature set. Extensions (collection size, mean fee, raw order
// count popularity) can be dropped for ablations.
FeatureSchema canonical_schema(bool include_extensions = true);

struct CollectionStats {
  CollectionId collection;
  std::uint64_t total_orders = 0;
  std::array<std::uint64_t, kNumShifts> orders_per_shift{};
  // NaN when the collection has no orders in the window.
  double free_delivery_order_fraction = kNaN;
  // Mean top-anchor cosine against users with a representation in the
  // shift; NaN when no such user exists.
  std::array<double, kNumShifts> popularity_by_shift{};
};

// Orders per shift over total orders; NaN when there are none.
double shift_specificity(const CollectionStats& stats, MealShift shift);

// Per-shift representation of every user at a snapshot time.
class UserRepresentations {
 public:
  UserRepresentations() = default;
  UserRepresentations(const Marketplace& market, const EmbeddingStore& store, Timestamp now,
                      double decay_per_day);

  const std::optional<UserShiftRepresentation>& get(UserId user, MealShift shift) const {
    return reps_.at(user.index() * kNumShifts + shift_index(shift));
  }
  std::size_t user_count() const { return reps_.size() / kNumShifts; }

 private:
  std::vector<std::optional<UserShiftRepresentation>> reps_;
};

// Highest anchor cosine against `vec` (the first similarity slot).
std::optional<double> top_similarity(const std::optional<UserShiftRepresentation>& rep,
                                     std::span<const double> vec);

// Every order placed by any user, in user then time order.
std::vector<Order> all_orders(const Marketplace& market);

// Aggregates over orders with timestamp in [window_end - window_days,
// window_end). An order counts toward a dish collection when its dish is a
// member and toward a restaurant collection when its restaurant is a member.
// `collection_vectors` is indexed by collection id; popularity is NaN for
// collections without a vector.
std::vector<CollectionStats> compute_collection_stats(
    std::span<const Order> orders, const Marketplace& market,
    std::span<const std::optional<Vector>> collection_vectors, const UserRepresentations& reps,
    Timestamp window_end, double window_days);

struct FeatureConfig {
  double window_days = 28.0;
  bool extensions = true;
};

class FeatureExtractor {
 public:
  // Snapshot at `now` (normally the marketplace epoch): user anchors, unified
  // collection vectors and trailing-window statistics.
  FeatureExtractor(const Marketplace& market, const EmbeddingStore& store,
                   const EmbeddingConfig& embedding, const FeatureConfig& config, Timestamp now);

  const FeatureSchema& schema() const { return schema_; }
  const Marketplace& market() const { return *market_; }
  // Points the extractor at an identical marketplace, such as the one it was
  // built from after that object has been moved.
  void rebind(const Marketplace& market) { market_ = &market; }
  const CollectionStats& stats(CollectionId c) const { return stats_.at(c.index()); }
  const std::vector<CollectionStats>& all_stats() const { return stats_; }
  const UserRepresentations& representations() const { return reps_; }
  // Throws MissingEmbeddingError when the collection could not be embedded.
  const Vector& collection_vector(CollectionId c) const;

  FeatureVector extract(const User& user, const Collection& collection, const Context& ctx) const;
  // Same values written into `out` (size == schema().size()).
  void extract_into(UserId user, CollectionId collection, MealShift shift,
                    std::span<double> out) const;

 private:
  const Marketplace* market_;
  FeatureSchema schema_;
  bool extensions_;
  UserRepresentations reps_;
  std::vector<std::optional<Vector>> collection_vectors_;
  std::vector<CollectionStats> stats_;
  std::vector<std::vector<RestaurantId>> collection_restaurants_;
  std::vector<double> mean_fees_;
  // Per user: restaurant -> order count per shift, before the snapshot.
  std::vector<std::unordered_map<std::uint32_t, std::array<std::uint32_t, kNumShifts>>> user_restaurant_orders_;
};

}  // namespace red
