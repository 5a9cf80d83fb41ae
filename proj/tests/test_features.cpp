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


#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "red/features.hpp"
#include "support.hpp"

using namespace red;

namespace {

struct Toy {
  Marketplace market;
  EmbeddingStore store;
};

Toy toy(std::uint64_t seed) {
  Toy t;
  t.market = generate_marketplace(testing::small_config(), seed);
  t.store = build_item_embeddings(t.market, 8, 0.35, seed + 1);
  return t;
}

Order order_at(UserId u, DishId d, Timestamp ts) {
  return Order{u, d, ts, meal_shift_of(ts), OrderSource::kOrganic, std::nullopt, std::nullopt};
}

Timestamp lunch_time(Timestamp epoch, int days_before) {
  return epoch - static_cast<Timestamp>(days_before) * kSecondsPerDay + 12 * 3600;
}

}  // namespace

TEST_CASE("canonical schema order and fingerprint") {
  const auto s = canonical_schema();
  CHECK(s.size() == 18);
  CHECK(s[0].name == "collection_popularity_sim");
  CHECK(s[7].name == "user_similarity_1");
  CHECK(s[12].name == "user_shift_orders_per_restaurant");
  CHECK(s[13].name == "shift_is_" + std::string(shift_name(MealShift::kDawn)));
  CHECK(canonical_schema(false).size() == 15);
  CHECK(s.fingerprint() == canonical_schema().fingerprint());
  CHECK(s.fingerprint() != canonical_schema(false).fingerprint());

  auto specs = s.features();
  std::swap(specs[1], specs[2]);
  CHECK(FeatureSchema(specs).fingerprint() != s.fingerprint());
  specs = s.features();
  specs[1].monotone = 1;
  CHECK(FeatureSchema(specs).fingerprint() != s.fingerprint());
}

TEST_CASE("schema text round trip, subsets and projections") {
  const auto s = canonical_schema();
  const auto back = FeatureSchema::parse(s.serialize());
  CHECK(back == s);
  CHECK(back.fingerprint() == s.fingerprint());

  const std::vector<std::string> names = {"vegan_match", "collection_popularity_sim"};
  const auto sub = s.subset(names);
  REQUIRE(sub.size() == 2);
  // Subsets keep the parent order.
  CHECK(sub[0].name == "collection_popularity_sim");
  CHECK(sub[1].name == "vegan_match");
  CHECK(s.projection_of(sub) == std::vector<std::size_t>{0, *s.index_of("vegan_match")});
  const std::vector<std::string> bad = {"no_such_feature"};
  CHECK_THROWS_AS(s.subset(bad), SchemaError);
  CHECK_FALSE(s.index_of("no_such_feature").has_value());
}

TEST_CASE("collection statistics over a hand-built order list") {
  auto t = toy(21);
  auto& m = t.market;
  // A dish collection whose four dishes sit in restaurants with fees 0, 0, 5, 7.
  std::vector<std::uint32_t> dishes;
  const std::vector<double> fees = {0.0, 0.0, 5.0, 7.0};
  for (std::size_t r = 0; r < fees.size(); ++r) {
    m.restaurants[r].delivery_fee = fees[r];
    dishes.push_back(m.restaurants[r].dishes[0].value);
  }
  std::sort(dishes.begin(), dishes.end());
  m.collections[0].kind = CollectionKind::kDish;
  m.collections[0].member_ids = dishes;

  const Timestamp end = m.epoch();
  const UserId u(0);
  std::vector<Order> orders;
  for (int i = 0; i < 10; ++i) {
    orders.push_back(order_at(u, DishId(dishes[0]), lunch_time(end, 1 + i)));
  }
  std::vector<std::optional<Vector>> vecs(m.collections.size() + m.categories.size());
  const UserRepresentations reps(m, t.store, end, recency_decay_per_day(30));

  SUBCASE("ten lunch orders") {
    const auto st = compute_collection_stats(orders, m, vecs, reps, end, 28);
    CHECK(st[0].total_orders == 10);
    CHECK(st[0].orders_per_shift[shift_index(MealShift::kLunch)] == 10);
    CHECK(shift_specificity(st[0], MealShift::kLunch) == 1.0);
    CHECK(shift_specificity(st[0], MealShift::kDinner) == 0.0);
    CHECK(std::isnan(st[0].popularity_by_shift[0]));
  }
  SUBCASE("free delivery share") {
    orders.clear();
    for (auto d : dishes) orders.push_back(order_at(u, DishId(d), lunch_time(end, 2)));
    const auto st = compute_collection_stats(orders, m, vecs, reps, end, 28);
    CHECK(st[0].free_delivery_order_fraction == 0.5);
  }
  SUBCASE("window bounds are half open") {
    orders = {order_at(u, DishId(dishes[0]), end),
              order_at(u, DishId(dishes[0]), end - 28 * kSecondsPerDay),
              order_at(u, DishId(dishes[0]), end - 28 * kSecondsPerDay - 1)};
    const auto st = compute_collection_stats(orders, m, vecs, reps, end, 28);
    CHECK(st[0].total_orders == 1);
  }
  SUBCASE("specificity mixes shifts") {
    orders.push_back(order_at(u, DishId(dishes[1]), end - 3 * kSecondsPerDay + 20 * 3600));
    orders.push_back(order_at(u, DishId(dishes[1]), end - 4 * kSecondsPerDay + 20 * 3600));
    const auto st = compute_collection_stats(orders, m, vecs, reps, end, 28);
    CHECK(shift_specificity(st[0], MealShift::kLunch) == doctest::Approx(10.0 / 12.0));
    CHECK(shift_specificity(st[0], MealShift::kDinner) == doctest::Approx(2.0 / 12.0));
  }
  SUBCASE("empty window is undefined") {
    const auto st = compute_collection_stats({}, m, vecs, reps, end, 28);
    CHECK(std::isnan(shift_specificity(st[0], MealShift::kLunch)));
    CHECK(std::isnan(st[0].free_delivery_order_fraction));
  }
}

TEST_CASE("popularity similarity is the mean top-anchor cosine over active users") {
  auto c = testing::small_config();
  c.users = 5;
  Toy t;
  t.market = generate_marketplace(c, 22);
  t.store = build_item_embeddings(t.market, 8, 0.35, 23);
  const auto& m = t.market;
  const FeatureExtractor fx(m, t.store, EmbeddingConfig{}, FeatureConfig{}, m.epoch());
  for (const auto& col : m.collections) {
    const auto& v = fx.collection_vector(col.id);
    for (MealShift s : kAllShifts) {
      double total = 0;
      int active = 0;
      for (const auto& u : m.users) {
        const auto rep = user_shift_representation(u, s, m, t.store, m.epoch(), recency_decay_per_day(30));
        if (!rep) continue;
        double best = -2;
        for (const auto& a : rep->anchors) {
          double ab = 0, aa = 0, bb = 0;
          for (std::size_t i = 0; i < v.size(); ++i) {
            ab += a.vector[i] * v[i];
            aa += static_cast<double>(a.vector[i]) * a.vector[i];
            bb += v[i] * v[i];
          }
          best = std::max(best, ab / std::sqrt(aa * bb));
        }
        total += best;
        ++active;
      }
      const double got = fx.stats(col.id).popularity_by_shift[shift_index(s)];
      if (active == 0) {
        CHECK(std::isnan(got));
      } else {
        CHECK(got == doctest::Approx(total / active).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("feature extraction") {
  auto t = toy(24);
  auto& m = t.market;
  const auto schema = canonical_schema();
  const auto col = [&](const char* n) { return *schema.index_of(n); };

  SUBCASE("shift orders per restaurant: four orders over eight restaurants") {
    auto& c = m.collections[0];
    c.kind = CollectionKind::kRestaurant;
    c.theme_filters = kNoFilter;
    c.member_ids = {0, 1, 2, 3, 4, 5, 6, 7};
    auto& u = m.users[0];
    u.orders.clear();
    for (int i = 0; i < 4; ++i) {
      u.orders.push_back(order_at(u.id, m.restaurants[static_cast<std::size_t>(i)].dishes[0], lunch_time(m.epoch(), 10 - i)));
    }
    u.orders.push_back(order_at(u.id, m.restaurants[0].dishes[0], m.epoch() - 3 * kSecondsPerDay + 20 * 3600));
    const FeatureExtractor fx(m, t.store, EmbeddingConfig{}, FeatureConfig{}, m.epoch());
    std::vector<double> row(schema.size());
    fx.extract_into(u.id, c.id, MealShift::kLunch, row);
    CHECK(row[col("user_shift_orders_per_restaurant")] == 0.5);
    CHECK(row[col("user_orders_in_collection_restaurants")] == 5.0);
    CHECK(row[col("is_dish_collection")] == 0.0);
    CHECK(row[col("collection_size")] == 8.0);
    fx.extract_into(u.id, c.id, MealShift::kDinner, row);
    CHECK(row[col("user_shift_orders_per_restaurant")] == 0.125);
    fx.extract_into(u.id, c.id, MealShift::kDawn, row);
    CHECK(std::isnan(row[col("user_similarity_1")]));
  }

  SUBCASE("vegan match needs both a vegan user and a vegan-only collection") {
    m.collections[0].theme_filters = kVeganOnly;
    m.collections[1].theme_filters = kNoFilter;
    m.users[0].is_vegan = true;
    m.users[1].is_vegan = false;
    const FeatureExtractor fx(m, t.store, EmbeddingConfig{}, FeatureConfig{}, m.epoch());
    std::vector<double> row(schema.size());
    const auto vm = col("vegan_match");
    fx.extract_into(UserId(0), CollectionId(0), MealShift::kLunch, row);
    CHECK(row[vm] == 1.0);
    fx.extract_into(UserId(1), CollectionId(0), MealShift::kLunch, row);
    CHECK(row[vm] == 0.0);
    fx.extract_into(UserId(0), CollectionId(1), MealShift::kLunch, row);
    CHECK(row[vm] == 0.0);
  }

  SUBCASE("every row is total, typed and consistent") {
    const FeatureExtractor fx(m, t.store, EmbeddingConfig{}, FeatureConfig{}, m.epoch());
    std::vector<double> row(schema.size());
    std::vector<double> first(schema.size());
    for (const auto& c : m.collections) {
      for (MealShift s : kAllShifts) {
        for (const auto& u : m.users) {
          fx.extract_into(u.id, c.id, s, row);
          if (u.id.value == 0) first = row;
          int hot = 0;
          for (std::size_t i = 0; i < schema.size(); ++i) {
            const auto& f = schema[i];
            if (f.missing == MissingPolicy::kNever) CHECK_FALSE(std::isnan(row[i]));
            if (f.group == FeatureGroup::kContext) hot += row[i] == 1.0 ? 1 : 0;
            if (f.group == FeatureGroup::kCollection) {
              // Collection columns ignore the user.
              CHECK(((std::isnan(row[i]) && std::isnan(first[i])) || row[i] == first[i]));
            }
          }
          CHECK(hot == 1);
          CHECK(row[col(feature_names::shift_one_hot(s).c_str())] == 1.0);
          const double s1 = row[col("user_similarity_1")];
          const double s2 = row[col("user_similarity_2")];
          const double s3 = row[col("user_similarity_3")];
          if (!std::isnan(s2)) CHECK(s1 >= s2);
          if (!std::isnan(s3)) CHECK(s2 >= s3);
          if (std::isnan(s1)) CHECK(std::isnan(s2));
        }
      }
    }
    const auto fv = fx.extract(m.users[3], m.collections[2], Context{MealShift::kSnack, HomeId(0), RegionId(0), 0});
    CHECK(fv.schema_fingerprint == schema.fingerprint());
    fx.extract_into(UserId(3), CollectionId(2), MealShift::kSnack, row);
    for (std::size_t i = 0; i < row.size(); ++i) {
      CHECK(((std::isnan(row[i]) && std::isnan(fv.values[i])) || row[i] == fv.values[i]));
    }
    std::vector<double> narrow(3);
    CHECK_THROWS_AS(fx.extract_into(UserId(0), CollectionId(0), MealShift::kLunch, narrow), SchemaError);
  }
}
