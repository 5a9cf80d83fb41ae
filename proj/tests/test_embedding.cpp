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
#include <sstream>

#include "doctest.h"
#include "red/embedding.hpp"
#include "support.hpp"

using namespace red;

namespace {

// Normalized mean recomputed without the library kernels.
Vector naive_normalized_mean(const std::vector<std::vector<double>>& rows) {
  Vector m(rows.at(0).size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += r[i];
  }
  double n2 = 0.0;
  for (auto& x : m) {
    x /= static_cast<double>(rows.size());
    n2 += x * x;
  }
  for (auto& x : m) x /= std::sqrt(n2);
  return m;
}

std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

Order order(UserId u, std::uint32_t dish, Timestamp ts) {
  return Order{u, DishId(dish), ts, meal_shift_of(ts), OrderSource::kOrganic, std::nullopt, std::nullopt};
}

}  // namespace

TEST_CASE("item store covers every dish with unit vectors") {
  const auto m = generate_marketplace(testing::small_config(), 1);
  const auto s = build_item_embeddings(m, 16, 0.35, 2);
  CHECK(s.size() == m.dishes.size());
  for (const auto& d : m.dishes) {
    REQUIRE(s.contains(d.id));
    double n2 = 0;
    for (float x : s.vector(d.id)) n2 += static_cast<double>(x) * x;
    CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-6);
  }
  CHECK(build_item_embeddings(m, 16, 0.35, 2) == s);
  CHECK_FALSE(build_item_embeddings(m, 16, 0.35, 3) == s);
  CHECK_THROWS_AS(build_item_embeddings(m, 1, 0.35, 2), ConfigError);
}

TEST_CASE("zero noise puts a taxonomy on its centroid") {
  const auto m = generate_marketplace(testing::small_config(), 1);
  const auto s = build_item_embeddings(m, 16, 0.0, 2);
  const auto& a = m.dishes[0];
  const auto b = std::find_if(m.dishes.begin() + 1, m.dishes.end(),
                              [&](const Dish& d) { return d.taxonomy == a.taxonomy; });
  REQUIRE(b != m.dishes.end());
  CHECK(cosine(s.vector(a.id), s.vector(b->id)) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("within-taxonomy similarity exceeds cross-taxonomy similarity") {
  auto c = testing::small_config();
  c.taxonomies = 3;
  const auto m = generate_marketplace(c, 1);
  const auto s = build_item_embeddings(m, 16, 0.1, 3);
  double within = 0, cross = 0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < m.dishes.size(); ++i) {
    for (std::size_t j = i + 1; j < m.dishes.size(); ++j) {
      const double cs = cosine(s.row(i), s.row(j));
      if (m.dishes[i].taxonomy == m.dishes[j].taxonomy) {
        within += cs;
        ++nw;
      } else {
        cross += cs;
        ++nc;
      }
    }
  }
  CHECK(within / static_cast<double>(nw) > cross / static_cast<double>(nc));
}

TEST_CASE("cosine examples") {
  const std::vector<double> v = {1, 2, 3};
  const std::vector<double> w = {-1, -2, -3};
  const std::vector<double> o = {3, 0, -1};
  const std::vector<double> z = {0, 0, 0};
  CHECK(cosine(v, v) == doctest::Approx(1.0));
  CHECK(cosine(v, w) == doctest::Approx(-1.0));
  CHECK(cosine(v, o) == doctest::Approx(0.0));
  CHECK(cosine(v, o) == cosine(o, v));
  CHECK_THROWS_AS(cosine(v, z), UndefinedSimilarityError);
}

TEST_CASE("restaurant embeddings") {
  const auto m = generate_marketplace(testing::small_config(), 4);
  const auto s = build_item_embeddings(m, 8, 0.35, 5);
  SUBCASE("a single dish is its own mean, bit for bit") {
    Restaurant r{RestaurantId(0), RegionId(0), TaxonomyId(0), 1.0, {DishId(7)}};
    CHECK(restaurant_embedding(r, s) == widen(s.vector(DishId(7))));
  }
  SUBCASE("three dishes recompute independently") {
    Restaurant r{RestaurantId(0), RegionId(0), TaxonomyId(0), 1.0, {DishId(9), DishId(2), DishId(5)}};
    const auto got = restaurant_embedding(r, s);
    const auto want = naive_normalized_mean(
        {widen(s.vector(DishId(9))), widen(s.vector(DishId(2))), widen(s.vector(DishId(5)))});
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
  SUBCASE("opposite vectors have no mean direction") {
    const EmbeddingStore pm(2, {DishId(0), DishId(1)}, {0.6f, 0.8f, -0.6f, -0.8f});
    Restaurant r{RestaurantId(0), RegionId(0), TaxonomyId(0), 1.0, {DishId(0), DishId(1)}};
    CHECK_THROWS_AS(restaurant_embedding(r, pm), MissingEmbeddingError);
  }
  SUBCASE("no embedded dish is an error") {
    Restaurant r{RestaurantId(0), RegionId(0), TaxonomyId(0), 1.0, {DishId(100000)}};
    CHECK_THROWS_AS(restaurant_embedding(r, s), MissingEmbeddingError);
  }
}

TEST_CASE("collection embeddings") {
  auto m = generate_marketplace(testing::small_config(), 6);
  const auto s = build_item_embeddings(m, 8, 0.35, 7);
  SUBCASE("singleton dish collection") {
    Collection c;
    c.kind = CollectionKind::kDish;
    c.member_ids = {13};
    CHECK(collection_embedding(c, m, s).vector == widen(s.vector(DishId(13))));
  }
  SUBCASE("singleton restaurant collection of a single-dish restaurant") {
    m.restaurants[3].dishes = {m.restaurants[3].dishes[0]};
    Collection c;
    c.kind = CollectionKind::kRestaurant;
    c.member_ids = {3};
    CHECK(collection_embedding(c, m, s).vector == widen(s.vector(m.restaurants[3].dishes[0])));
  }
  SUBCASE("dish mean over four members") {
    Collection c;
    c.kind = CollectionKind::kDish;
    c.member_ids = {1, 4, 8, 20};
    const auto got = collection_embedding(c, m, s).vector;
    std::vector<std::vector<double>> rows;
    for (auto id : c.member_ids) rows.push_back(widen(s.vector(DishId(id))));
    const auto want = naive_normalized_mean(rows);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-9);
  }
  SUBCASE("every generated collection matches the independent recomputation") {
    for (const auto& c : m.collections) {
      const auto got = collection_embedding(c, m, s).vector;
      double n2 = 0;
      for (double x : got) n2 += x * x;
      CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-6);
      if (c.kind != CollectionKind::kDish) continue;
      std::vector<std::vector<double>> rows;
      for (auto id : c.member_ids) rows.push_back(widen(s.vector(DishId(id))));
      const auto want = naive_normalized_mean(rows);
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-9);
    }
  }
  SUBCASE("member order does not matter") {
    for (const auto& c : m.collections) {
      Collection r = c;
      std::reverse(r.member_ids.begin(), r.member_ids.end());
      CHECK(collection_embedding(r, m, s).vector == collection_embedding(c, m, s).vector);
    }
  }
}

TEST_CASE("regional representations") {
  const auto m = generate_marketplace(testing::small_config(), 8);
  const auto s = build_item_embeddings(m, 8, 0.35, 9);
  std::vector<std::vector<std::uint32_t>> by_region(m.regions.size());
  for (const auto& r : m.restaurants) by_region[r.region.index()].push_back(r.id.value);

  SUBCASE("single-region collection equals its unified vector") {
    Collection c;
    c.kind = CollectionKind::kRestaurant;
    c.member_ids = {by_region[0][0], by_region[0][1]};
    CHECK(regional_variability(c, m, s) == doctest::Approx(1.0));
    CHECK_THROWS_AS(collection_embedding(c, m, s, EmbeddingScope::in_region(RegionId(1))), EmptyRegionError);
  }
  SUBCASE("three disjoint regional member sets") {
    Collection c;
    c.kind = CollectionKind::kRestaurant;
    for (std::size_t r = 0; r < 3; ++r) {
      c.member_ids.push_back(by_region[r][0]);
      c.member_ids.push_back(by_region[r][1]);
    }
    std::sort(c.member_ids.begin(), c.member_ids.end());
    const auto unified = collection_embedding(c, m, s).vector;
    std::vector<double> cs;
    for (std::size_t r = 0; r < 3; ++r) {
      const auto a = restaurant_embedding(m.restaurants[by_region[r][0]], s);
      const auto b = restaurant_embedding(m.restaurants[by_region[r][1]], s);
      cs.push_back(naive_cosine(naive_normalized_mean({a, b}), unified));
    }
    std::sort(cs.begin(), cs.end());
    CHECK(regional_variability(c, m, s) == doctest::Approx(cs[1]).epsilon(1e-9));
    CHECK(collection_regions(c, m).size() == 3);
  }
}

TEST_CASE("user anchors") {
  auto m = generate_marketplace(testing::small_config(), 10);
  const auto s = build_item_embeddings(m, 8, 0.35, 11);
  const double decay = recency_decay_per_day(30.0);
  const Timestamp now = m.epoch();
  const Timestamp lunch = now - 5 * kSecondsPerDay + 12 * 3600;
  auto dish_of_tax = [&](std::uint32_t t, std::size_t k) {
    std::vector<std::uint32_t> ids;
    for (const auto& d : m.dishes) {
      if (d.taxonomy.value == t) ids.push_back(d.id.value);
    }
    return ids.at(k);
  };
  User u = m.users[0];

  SUBCASE("one taxonomy gives one anchor") {
    u.orders = {order(u.id, dish_of_tax(0, 0), lunch), order(u.id, dish_of_tax(0, 1), lunch + 60)};
    const auto rep = user_shift_representation(u, MealShift::kLunch, m, s, now, decay);
    REQUIRE(rep.has_value());
    CHECK(rep->anchors.size() == 1);
  }
  SUBCASE("equal ages pick the modal dish of the three most frequent taxonomies") {
    // Counts per taxonomy: t0 = 5, t1 = 4, t2 = 3, t3 = 1; modal dishes d(t,1).
    const std::vector<std::pair<std::uint32_t, std::vector<int>>> plan = {
        {0, {1, 1, 1, 0, 2}}, {1, {1, 1, 0, 2}}, {2, {1, 1, 0}}, {3, {0}}};
    u.orders.clear();
    for (const auto& [t, picks] : plan) {
      for (int k : picks) u.orders.push_back(order(u.id, dish_of_tax(t, static_cast<std::size_t>(k)), lunch));
    }
    const auto rep = user_shift_representation(u, MealShift::kLunch, m, s, now, decay);
    REQUIRE(rep.has_value());
    REQUIRE(rep->anchors.size() == 3);
    for (std::uint32_t t = 0; t < 3; ++t) {
      CHECK(rep->anchors[t].taxonomy == TaxonomyId(t));
      CHECK(rep->anchors[t].dish == DishId(dish_of_tax(t, 1)));
      CHECK(rep->anchors[t].vector == std::vector<float>(s.vector(rep->anchors[t].dish).begin(),
                                                         s.vector(rep->anchors[t].dish).end()));
    }
  }
  SUBCASE("no orders in the shift means no representation") {
    u.orders = {order(u.id, dish_of_tax(0, 0), now - 2 * kSecondsPerDay + 20 * 3600)};
    CHECK_FALSE(user_shift_representation(u, MealShift::kLunch, m, s, now, decay).has_value());
  }
  SUBCASE("editing dinner history leaves lunch bit-identical") {
    const auto& base = m.users[1];
    const auto before = user_shift_representation(base, MealShift::kLunch, m, s, now, decay);
    User edited = base;
    std::erase_if(edited.orders, [](const Order& o) { return o.shift == MealShift::kDinner; });
    edited.orders.push_back(order(edited.id, 0, now - kSecondsPerDay + 20 * 3600));
    const auto after = user_shift_representation(edited, MealShift::kLunch, m, s, now, decay);
    REQUIRE(before.has_value() == after.has_value());
    if (before) {
      REQUIRE(before->anchors.size() == after->anchors.size());
      for (std::size_t i = 0; i < before->anchors.size(); ++i) {
        CHECK(before->anchors[i].dish == after->anchors[i].dish);
        CHECK(before->anchors[i].vector == after->anchors[i].vector);
      }
    }
  }
}

TEST_CASE("anchor taxonomies are distinct for every user and shift") {
  const auto m = generate_marketplace(testing::small_config(), 12);
  const auto s = build_item_embeddings(m, 8, 0.35, 13);
  for (const auto& u : m.users) {
    for (MealShift sh : kAllShifts) {
      const auto rep = user_shift_representation(u, sh, m, s, m.epoch(), recency_decay_per_day(30));
      if (!rep) continue;
      CHECK(rep->anchors.size() >= 1);
      CHECK(rep->anchors.size() <= 3);
      for (std::size_t i = 0; i < rep->anchors.size(); ++i) {
        for (std::size_t j = i + 1; j < rep->anchors.size(); ++j) {
          CHECK(rep->anchors[i].taxonomy != rep->anchors[j].taxonomy);
        }
      }
    }
  }
}

TEST_CASE("embedding file round trips and rejects damage") {
  const auto m = generate_marketplace(testing::small_config(), 14);
  const auto s = build_item_embeddings(m, 8, 0.35, 15);
  const auto dir = testing::temp_dir("embedding");
  save_embeddings(s, dir + "/e.bin");
  CHECK(load_embeddings(dir + "/e.bin") == s);
  auto bytes = encode_embeddings(s);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_embeddings(bytes), CorruptFileError);
  std::ostringstream text;
  export_embeddings_text(s, text);
  const auto dump = text.str();
  CHECK(static_cast<std::size_t>(std::count(dump.begin(), dump.end(), '\n')) == s.size());
}
