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

#include "red/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "red/binary_io.hpp"
#include "red/simd.hpp"

namespace red {

EmbeddingStore::EmbeddingStore(std::size_t dim, std::vector<DishId> ids, std::vector<float> data)
    : dim_(dim), ids_(std::move(ids)), data_(std::move(data)) {
  if (data_.size() != dim_ * ids_.size()) {
    throw Error("embedding store: data size does not match dim * count");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error("embedding store: duplicate dish id " + std::to_string(ids_[i].value));
    }
  }
}

std::span<const float> EmbeddingStore::vector(DishId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) {
    throw MissingEmbeddingError("no embedding for dish " + std::to_string(id.value));
  }
  return row(it->second);
}

EmbeddingStore build_item_embeddings(const Marketplace& market, std::size_t dim, double sigma,
                                     std::uint64_t seed) {
  if (dim < 2) throw ConfigError("embedding dim must be >= 2");
  if (sigma < 0.0) throw ConfigError("embedding sigma must be >= 0");
  Rng rng(derive_seed(seed, "embeddings"));
  std::vector<Vector> centroids(market.taxonomies.size(), Vector(dim));
  for (auto& c : centroids) {
    double norm = 0.0;
    while (norm < 1e-6) {
      for (auto& x : c) x = rng.normal();
      norm = std::sqrt(simd::dot(std::span<const double>(c), std::span<const double>(c)));
    }
    simd::scale(c, 1.0 / norm);
  }
  std::vector<DishId> ids;
  std::vector<float> data;
  ids.reserve(market.dishes.size());
  data.reserve(market.dishes.size() * dim);
  Vector v(dim);
  for (const auto& d : market.dishes) {
    const auto& c = centroids[d.taxonomy.index()];
    double norm = 0.0;
    do {
      for (std::size_t k = 0; k < dim; ++k) v[k] = c[k] + sigma * rng.normal();
      norm = std::sqrt(simd::dot(std::span<const double>(v), std::span<const double>(v)));
    } while (norm < 1e-6);
    ids.push_back(d.id);
    for (std::size_t k = 0; k < dim; ++k) data.push_back(static_cast<float>(v[k] / norm));
  }
  return EmbeddingStore(dim, std::move(ids), std::move(data));
}

// ---------------------------------------------------------------------------

namespace {

template <class A, class B>
double cosine_impl(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) throw UndefinedSimilarityError("cosine: dimension mismatch");
  const double na = simd::dot(a, a);
  const double nb = simd::dot(b, b);
  if (!(na > 0.0) || !(nb > 0.0)) throw UndefinedSimilarityError("cosine of a zero vector");
  const double c = simd::dot(a, b) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// In-place normalization of a mean; a vanishing mean has no direction.
void normalize_or_throw(Vector& v, const std::string& what) {
  const double n2 = simd::dot(std::span<const double>(v), std::span<const double>(v));
  if (!(n2 > 1e-24)) throw MissingEmbeddingError(what + ": degenerate (zero) mean vector");
  simd::scale(v, 1.0 / std::sqrt(n2));
}

bool in_region(const Collection& c, std::uint32_t member, RegionId region, const Marketplace& m) {
  if (c.kind == CollectionKind::kDish) {
    return m.restaurants.at(m.dishes.at(member).restaurant.index()).region == region;
  }
  return m.restaurants.at(member).region == region;
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }
double cosine(std::span<const float> a, std::span<const double> b) { return cosine_impl(a, b); }
double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

Vector restaurant_embedding(const Restaurant& restaurant, const EmbeddingStore& store) {
  std::vector<DishId> dishes = restaurant.dishes;
  std::sort(dishes.begin(), dishes.end());
  Vector acc(store.dim(), 0.0);
  std::size_t n = 0;
  for (DishId d : dishes) {
    if (!store.contains(d)) continue;
    simd::accumulate(acc, store.vector(d));
    ++n;
  }
  const std::string what = "restaurant " + std::to_string(restaurant.id.value);
  if (n == 0) throw MissingEmbeddingError(what + " has no embedded dishes");
  // A single unit vector is its own normalized mean; keep it bit-exact.
  if (n == 1) return acc;
  simd::scale(acc, 1.0 / static_cast<double>(n));
  normalize_or_throw(acc, what);
  return acc;
}

CollectionRepresentation collection_embedding(const Collection& collection,
                                              const Marketplace& market,
                                              const EmbeddingStore& store, EmbeddingScope scope) {
  std::vector<std::uint32_t> members = collection.member_ids;
  std::sort(members.begin(), members.end());
  if (scope.regional) {
    std::erase_if(members, [&](std::uint32_t id) { return !in_region(collection, id, scope.region, market); });
    if (members.empty()) {
      throw EmptyRegionError("collection " + std::to_string(collection.id.value) +
                             " has no members in region " + std::to_string(scope.region.value));
    }
  }
  const std::string what = "collection " + std::to_string(collection.id.value);
  if (members.empty()) throw MissingEmbeddingError(what + " has no members");
  Vector acc(store.dim(), 0.0);
  for (auto id : members) {
    if (collection.kind == CollectionKind::kDish) {
      simd::accumulate(acc, store.vector(DishId(id)));
    } else {
      const Vector r = restaurant_embedding(market.restaurant(RestaurantId(id)), store);
      simd::accumulate(acc, std::span<const double>(r));
    }
  }
  if (members.size() > 1) {
    simd::scale(acc, 1.0 / static_cast<double>(members.size()));
    normalize_or_throw(acc, what);
  }
  return {collection.id, std::move(acc), scope};
}

std::optional<UserShiftRepresentation> user_shift_representation(
    const User& user, MealShift shift, const Marketplace& market, const EmbeddingStore& store,
    Timestamp now, double decay_per_day) {
  std::map<std::uint32_t, double> dish_score;
  for (const auto& o : user.orders) {
    if (o.shift != shift || o.timestamp >= now) continue;
    const double age_days = static_cast<double>(now - o.timestamp) / static_cast<double>(kSecondsPerDay);
    dish_score[o.dish.value] += std::exp(-decay_per_day * age_days);
  }
  if (dish_score.empty()) return std::nullopt;

  struct TaxonomyBest {
    double score = 0.0;
    std::uint32_t best_dish = 0;
    double best_score = -1.0;
  };
  std::map<std::uint32_t, TaxonomyBest> taxa;
  for (const auto& [dish, score] : dish_score) {
    auto& t = taxa[market.dish(DishId(dish)).taxonomy.value];
    t.score += score;
    // Ascending dish iteration, so strict > keeps the lower id on ties.
    if (score > t.best_score) {
      t.best_score = score;
      t.best_dish = dish;
    }
  }
  std::vector<std::pair<std::uint32_t, TaxonomyBest>> ranked(taxa.begin(), taxa.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second.score > b.second.score; });

  UserShiftRepresentation rep;
  rep.user = user.id;
  rep.shift = shift;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) {
    const DishId dish(ranked[i].second.best_dish);
    const auto v = store.vector(dish);
    rep.anchors.push_back(AnchorItem{dish, TaxonomyId(ranked[i].first), {v.begin(), v.end()}});
  }
  return rep;
}

std::vector<RegionId> collection_regions(const Collection& collection, const Marketplace& market) {
  std::vector<RegionId> out;
  for (const auto& r : market.regions) {
    const bool any = std::any_of(collection.member_ids.begin(), collection.member_ids.end(),
                                 [&](std::uint32_t id) { return in_region(collection, id, r, market); });
    if (any) out.push_back(r);
  }
  return out;
}

double regional_variability(const Collection& collection, const Marketplace& market,
                            const EmbeddingStore& store) {
  const auto unified = collection_embedding(collection, market, store);
  std::vector<double> sims;
  for (RegionId r : collection_regions(collection, market)) {
    const auto regional = collection_embedding(collection, market, store, EmbeddingScope::in_region(r));
    sims.push_back(cosine(std::span<const double>(regional.vector), std::span<const double>(unified.vector)));
  }
  if (sims.empty()) return 1.0;
  std::sort(sims.begin(), sims.end());
  const std::size_t n = sims.size();
  return n % 2 == 1 ? sims[n / 2] : 0.5 * (sims[n / 2 - 1] + sims[n / 2]);
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kEmbeddingMagic = "REDEMBED";
constexpr std::uint32_t kEmbeddingVersion = 1;
}  // namespace

std::vector<std::byte> encode_embeddings(const EmbeddingStore& store) {
  io::ByteWriter w;
  w.put_raw(kEmbeddingMagic);
  w.put(kEmbeddingVersion);
  w.put(static_cast<std::uint32_t>(store.dim()));
  w.put(static_cast<std::uint64_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    w.put(static_cast<std::uint64_t>(store.ids()[i].value));
    for (float x : store.row(i)) w.put(x);
  }
  return std::move(w.bytes());
}

EmbeddingStore decode_embeddings(std::span<const std::byte> bytes) {
  io::ByteReader r(bytes);
  if (r.get_raw(kEmbeddingMagic.size()) != kEmbeddingMagic) {
    throw CorruptFileError("embedding file: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion) {
    throw VersionError("embedding file version " + std::to_string(version) + " is not supported");
  }
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (dim == 0 || count > r.remaining() / (8 + 4ull * dim)) {
    throw CorruptFileError("embedding file: header does not match payload size");
  }
  std::vector<DishId> ids;
  std::vector<float> data;
  ids.reserve(count);
  data.reserve(count * dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    ids.emplace_back(static_cast<std::uint32_t>(r.get<std::uint64_t>()));
    for (std::uint32_t k = 0; k < dim; ++k) data.push_back(r.get<float>());
  }
  if (r.remaining() != 0) throw CorruptFileError("embedding file: trailing bytes");
  return EmbeddingStore(dim, std::move(ids), std::move(data));
}

void save_embeddings(const EmbeddingStore& store, const std::string& path) {
  io::write_file_bytes(path, encode_embeddings(store));
}

EmbeddingStore load_embeddings(const std::string& path) {
  return decode_embeddings(io::read_file_bytes(path));
}

void export_embeddings_text(const EmbeddingStore& store, std::ostream& out) {
  char buf[32];
  for (std::size_t i = 0; i < store.size(); ++i) {
    out << store.ids()[i].value;
    for (float x : store.row(i)) {
      std::snprintf(buf, sizeof(buf), "\t%.9g", static_cast<double>(x));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace red
