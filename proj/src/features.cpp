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

#include "red/features.hpp"

#include <algorithm>

namespace red {

std::string feature_names::shift_one_hot(MealShift s) {
  return "shift_is_" + std::string(shift_name(s));
}

FeatureSchema canonical_schema(bool include_extensions) {
  using namespace feature_names;
  using G = FeatureGroup;
  constexpr auto M = MissingPolicy::kMarker;
  constexpr auto N = MissingPolicy::kNever;
  std::vector<FeatureSpec> f = {
      {kPopularitySim, G::kCollection, +1, M, false},
      {kIsDishCollection, G::kCollection, 0, N, false},
      {kFreeDeliveryFraction, G::kCollection, 0, M, false},
      {kShiftSpecificity, G::kCollection, +1, M, false},
  };
  if (include_extensions) {
    f.push_back({kCollectionSize, G::kCollection, 0, N, true});
    f.push_back({kMeanDeliveryFee, G::kCollection, -1, N, true});
    f.push_back({kOrderCountPopularity, G::kCollection, 0, N, true});
  }
  f.push_back({kSimilarity1, G::kUserCollection, +1, M, false});
  f.push_back({kSimilarity2, G::kUserCollection, +1, M, false});
  f.push_back({kSimilarity3, G::kUserCollection, +1, M, false});
  f.push_back({kUserOrdersInRestaurants, G::kUserCollection, 0, N, false});
  f.push_back({kVeganMatch, G::kUserCollection, +1, N, false});
  f.push_back({kShiftOrdersPerRestaurant, G::kUserCollection, +1, N, false});
  for (MealShift s : kAllShifts) f.push_back({shift_one_hot(s), G::kContext, 0, N, false});
  return FeatureSchema(std::move(f));
}

double shift_specificity(const CollectionStats& stats, MealShift shift) {
  if (stats.total_orders == 0) return kNaN;
  return static_cast<double>(stats.orders_per_shift[shift_index(shift)]) /
         static_cast<double>(stats.total_orders);
}

UserRepresentations::UserRepresentations(const Marketplace& market, const EmbeddingStore& store,
                                         Timestamp now, double decay_per_day) {
  reps_.resize(market.users.size() * kNumShifts);
  for (const auto& u : market.users) {
    for (MealShift s : kAllShifts) {
      reps_[u.id.index() * kNumShifts + shift_index(s)] =
          user_shift_representation(u, s, market, store, now, decay_per_day);
    }
  }
}

std::optional<double> top_similarity(const std::optional<UserShiftRepresentation>& rep,
                                     std::span<const double> vec) {
  if (!rep) return std::nullopt;
  double best = -2.0;
  for (const auto& a : rep->anchors) {
    best = std::max(best, cosine(std::span<const float>(a.vector), vec));
  }
  return best;
}

std::vector<Order> all_orders(const Marketplace& market) {
  std::vector<Order> out;
  for (const auto& u : market.users) out.insert(out.end(), u.orders.begin(), u.orders.end());
  return out;
}

std::vector<CollectionStats> compute_collection_stats(
    std::span<const Order> orders, const Marketplace& market,
    std::span<const std::optional<Vector>> collection_vectors, const UserRepresentations& reps,
    Timestamp window_end, double window_days) {
  const std::size_t n = market.collections.size() + market.categories.size();
  std::vector<CollectionStats> stats(n);
  std::vector<std::vector<std::uint32_t>> by_dish(market.dishes.size());
  std::vector<std::vector<std::uint32_t>> by_restaurant(market.restaurants.size());
  std::vector<std::uint64_t> free_orders(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = market.collection(CollectionId(static_cast<std::uint32_t>(i)));
    stats[i].collection = c.id;
    for (auto m : c.member_ids) {
      (c.kind == CollectionKind::kDish ? by_dish : by_restaurant).at(m).push_back(c.id.value);
    }
  }

  const auto window_start =
      window_end - static_cast<Timestamp>(window_days * static_cast<double>(kSecondsPerDay));
  for (const auto& o : orders) {
    if (o.timestamp < window_start || o.timestamp >= window_end) continue;
    const auto& dish = market.dish(o.dish);
    const bool free = market.restaurant(dish.restaurant).delivery_fee == 0.0;
    auto count = [&](std::uint32_t c) {
      auto& s = stats[c];
      ++s.total_orders;
      ++s.orders_per_shift[shift_index(o.shift)];
      if (free) ++free_orders[c];
    };
    for (auto c : by_dish[o.dish.index()]) count(c);
    for (auto c : by_restaurant[dish.restaurant.index()]) count(c);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& s = stats[i];
    if (s.total_orders > 0) {
      s.free_delivery_order_fraction =
          static_cast<double>(free_orders[i]) / static_cast<double>(s.total_orders);
    }
    for (MealShift shift : kAllShifts) {
      double total = 0.0;
      std::size_t active = 0;
      if (i < collection_vectors.size() && collection_vectors[i]) {
        for (std::size_t u = 0; u < reps.user_count(); ++u) {
          const auto sim = top_similarity(reps.get(UserId(static_cast<std::uint32_t>(u)), shift),
                                          *collection_vectors[i]);
          if (!sim) continue;
          total += *sim;
          ++active;
        }
      }
      s.popularity_by_shift[shift_index(shift)] =
          active > 0 ? total / static_cast<double>(active) : kNaN;
    }
  }
  return stats;
}

FeatureExtractor::FeatureExtractor(const Marketplace& market, const EmbeddingStore& store,
                                   const EmbeddingConfig& embedding, const FeatureConfig& config,
                                   Timestamp now)
    : market_(&market),
      schema_(canonical_schema(config.extensions)),
      extensions_(config.extensions),
      reps_(market, store, now, recency_decay_per_day(embedding.recency_half_life_days)) {
  if (config.window_days <= 0.0) throw ConfigError("features.window_days must be > 0");
  const std::size_t n = market.collections.size() + market.categories.size();
  collection_vectors_.resize(n);
  collection_restaurants_.resize(n);
  mean_fees_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = market.collection(CollectionId(static_cast<std::uint32_t>(i)));
    try {
      collection_vectors_[i] = collection_embedding(c, market, store).vector;
    } catch (const MissingEmbeddingError&) {
      collection_vectors_[i].reset();
    }
    collection_restaurants_[i] = member_restaurants(c, market);
    mean_fees_[i] = mean_delivery_fee(c, market);
  }
  const auto orders = all_orders(market);
  stats_ = compute_collection_stats(orders, market, collection_vectors_, reps_, now, config.window_days);

  user_restaurant_orders_.resize(market.users.size());
  for (const auto& u : market.users) {
    auto& counts = user_restaurant_orders_[u.id.index()];
    for (const auto& o : u.orders) {
      if (o.timestamp >= now) continue;
      auto& row = counts[market.dish(o.dish).restaurant.value];
      ++row[shift_index(o.shift)];
    }
  }
}

const Vector& FeatureExtractor::collection_vector(CollectionId c) const {
  const auto& v = collection_vectors_.at(c.index());
  if (!v) {
    throw MissingEmbeddingError("collection " + std::to_string(c.value) + " has no embedding");
  }
  return *v;
}

FeatureVector FeatureExtractor::extract(const User& user, const Collection& collection,
                                        const Context& ctx) const {
  FeatureVector fv;
  fv.schema_fingerprint = schema_.fingerprint();
  fv.values.resize(schema_.size());
  extract_into(user.id, collection.id, ctx.shift, fv.values);
  return fv;
}

void FeatureExtractor::extract_into(UserId user_id, CollectionId collection_id, MealShift shift,
                                    std::span<double> out) const {
  if (out.size() != schema_.size()) throw SchemaError("output row has the wrong width");
  const auto& market = *market_;
  const auto& user = market.user(user_id);
  const auto& collection = market.collection(collection_id);
  const auto& vec = collection_vector(collection_id);
  const auto& st = stats_.at(collection_id.index());
  const auto si = shift_index(shift);

  std::size_t k = 0;
  // COLLECTION
  out[k++] = st.popularity_by_shift[si];
  out[k++] = collection.kind == CollectionKind::kDish ? 1.0 : 0.0;
  out[k++] = st.free_delivery_order_fraction;
  out[k++] = shift_specificity(st, shift);
  if (extensions_) {
    out[k++] = static_cast<double>(collection.member_ids.size());
    out[k++] = mean_fees_[collection_id.index()];
    out[k++] = static_cast<double>(st.total_orders);
  }

  // USER_COLLECTION
  std::array<double, 3> sims = {kNaN, kNaN, kNaN};
  if (const auto& rep = reps_.get(user_id, shift)) {
    std::vector<double> s;
    for (const auto& a : rep->anchors) s.push_back(cosine(std::span<const float>(a.vector), vec));
    std::sort(s.begin(), s.end(), std::greater<>());
    for (std::size_t i = 0; i < s.size() && i < 3; ++i) sims[i] = s[i];
  }
  for (double s : sims) out[k++] = s;

  const auto& counts = user_restaurant_orders_[user_id.index()];
  std::uint64_t all_shifts = 0;
  std::uint64_t in_shift = 0;
  const auto& restaurants = collection_restaurants_[collection_id.index()];
  for (RestaurantId r : restaurants) {
    const auto it = counts.find(r.value);
    if (it == counts.end()) continue;
    for (auto c : it->second) all_shifts += c;
    in_shift += it->second[si];
  }
  out[k++] = static_cast<double>(all_shifts);
  out[k++] = (collection.has_filter(kVeganOnly) && user.is_vegan) ? 1.0 : 0.0;
  out[k++] = restaurants.empty() ? 0.0
                                 : static_cast<double>(in_shift) / static_cast<double>(restaurants.size());

  // CONTEXT
  for (MealShift s : kAllShifts) out[k++] = s == shift ? 1.0 : 0.0;
}

}  // namespace red
