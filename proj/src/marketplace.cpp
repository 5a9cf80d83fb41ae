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

#include "red/marketplace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

namespace red {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Meal shifts.

namespace {

constexpr std::array<std::int64_t, kNumShifts + 1> kShiftBoundaryHours = {0, 6, 11, 15, 19, 24};
constexpr std::array<std::string_view, kNumShifts> kShiftNames = {"DAWN", "BREAKFAST", "LUNCH",
                                                                  "SNACK", "DINNER"};

}  // namespace

MealShift meal_shift_of(Timestamp ts) {
  const std::int64_t second = ((ts % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay;
  const std::int64_t hour = second / 3600;
  for (std::size_t i = 0; i < kNumShifts; ++i) {
    if (hour < kShiftBoundaryHours[i + 1]) return static_cast<MealShift>(i);
  }
  return MealShift::kDinner;
}

std::int64_t shift_start_second(MealShift shift) {
  return kShiftBoundaryHours[shift_index(shift)] * 3600;
}

std::int64_t shift_length_seconds(MealShift shift) {
  const auto i = shift_index(shift);
  return (kShiftBoundaryHours[i + 1] - kShiftBoundaryHours[i]) * 3600;
}

std::string_view shift_name(MealShift shift) { return kShiftNames[shift_index(shift)]; }

MealShift parse_shift(std::string_view name) {
  for (std::size_t i = 0; i < kNumShifts; ++i) {
    if (kShiftNames[i] == name) return static_cast<MealShift>(i);
  }
  throw CorruptFileError("unknown meal shift '" + std::string(name) + "'");
}

std::array<double, kNumShifts> shift_traffic_weights() {
  return {0.05, 0.15, 0.35, 0.15, 0.30};
}

namespace {

Timestamp sample_timestamp(Timestamp day_start, double u_shift, double u_time) {
  const auto weights = shift_traffic_weights();
  const auto shift = static_cast<MealShift>(sample_weighted(weights, u_shift));
  const auto offset =
      static_cast<std::int64_t>(u_time * static_cast<double>(shift_length_seconds(shift)));
  return day_start + shift_start_second(shift) + offset;
}

double round_cents(double x) { return std::round(x * 100.0) / 100.0; }

// Exact-count boolean attribute: round(fraction * n) trues, then shuffled.
std::vector<bool> exact_flags(std::size_t n, double fraction, Rng& rng) {
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<bool> flags(n, false);
  for (std::size_t i = 0; i < std::min(count, n); ++i) flags[i] = true;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    const bool tmp = flags[i - 1];
    flags[i - 1] = flags[j];
    flags[j] = tmp;
  }
  return flags;
}

template <class T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  }
  pool.resize(k);
  return pool;
}

void validate(const MarketplaceConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("marketplace config: " + what);
  };
  require(c.schema_version == 1, "unsupported schema_version " + std::to_string(c.schema_version));
  require(c.regions >= 1, "regions must be >= 1");
  require(c.taxonomies >= 1, "taxonomies must be >= 1");
  require(c.restaurants >= 1, "restaurants must be >= 1");
  require(c.users >= 1, "users must be >= 1");
  require(c.collections >= 1, "collections must be >= 1");
  require(c.dishes >= c.restaurants, "dishes must be >= restaurants (every restaurant needs a dish)");
  require(!c.home_multipliers.empty(), "at least one home is required");
  for (double m : c.home_multipliers) require(m > 0.0, "home multipliers must be > 0");
  auto fraction = [&](double f, const char* name) {
    require(f >= 0.0 && f <= 1.0, std::string(name) + " must be in [0,1]");
  };
  fraction(c.vegan_dish_fraction, "vegan_dish_fraction");
  fraction(c.vegan_user_fraction, "vegan_user_fraction");
  fraction(c.free_delivery_fraction, "free_delivery_fraction");
  fraction(c.cold_user_fraction, "cold_user_fraction");
  fraction(c.primary_taxonomy_share, "primary_taxonomy_share");
  fraction(c.reorder_probability, "reorder_probability");
  require(c.taste_concentration > 0.0, "taste_concentration must be > 0");
  require(c.price_min > 0.0 && c.price_max >= c.price_min, "price range must be positive");
  require(c.fee_min > 0.0 && c.fee_max >= c.fee_min, "paid delivery fee range must be positive");
  require(c.history_days > 0.0, "history_days must be > 0");
  require(c.orders_per_user >= 0.0, "orders_per_user must be >= 0");
  require(c.min_collection_size >= 1 && c.max_collection_size >= c.min_collection_size,
          "collection size range invalid");
  require(c.choice.temperature > 0.0, "choice.temperature must be > 0");
  require(c.choice.position_decay > 0.0 && c.choice.position_decay <= 1.0,
          "choice.position_decay must be in (0,1]");
  if (!c.collection_specs.empty()) {
    require(c.collection_specs.size() == c.collections,
            "collection_specs must list exactly `collections` entries");
    for (const auto& spec : c.collection_specs) {
      for (auto t : spec.taxonomies) {
        require(t < c.taxonomies, "collection '" + spec.title + "' references missing taxonomy " +
                                      std::to_string(t));
      }
      for (auto h : spec.homes) {
        require(h < c.home_multipliers.size(),
                "collection '" + spec.title + "' references missing home " + std::to_string(h));
      }
      require(spec.size >= 1, "collection '" + spec.title + "' must have size >= 1");
    }
  }
}

// Builds one collection's member list from a spec; returns false if no
// candidate members exist.
bool fill_members(Collection& col, const CollectionSpec& spec, const Marketplace& m, Rng& rng) {
  std::set<std::uint32_t> taxa(spec.taxonomies.begin(), spec.taxonomies.end());
  const bool vegan = (spec.theme_filters & kVeganOnly) != 0;
  const bool free = (spec.theme_filters & kFreeDeliveryOnly) != 0;
  std::vector<std::uint32_t> pool;
  if (spec.kind == CollectionKind::kDish) {
    for (const auto& d : m.dishes) {
      if (!taxa.empty() && !taxa.contains(d.taxonomy.value)) continue;
      if (vegan && !d.is_vegan) continue;
      if (free && m.restaurants[d.restaurant.index()].delivery_fee != 0.0) continue;
      pool.push_back(d.id.value);
    }
  } else {
    for (const auto& r : m.restaurants) {
      if (!taxa.empty() && !taxa.contains(r.primary_taxonomy.value)) continue;
      if (free && r.delivery_fee != 0.0) continue;
      if (vegan) {
        const bool all_vegan = std::all_of(r.dishes.begin(), r.dishes.end(), [&](DishId d) {
          return m.dishes[d.index()].is_vegan;
        });
        if (!all_vegan) continue;
      }
      pool.push_back(r.id.value);
    }
  }
  if (pool.empty()) return false;
  col.kind = spec.kind;
  col.theme_filters = spec.theme_filters;
  col.member_ids = sample_without_replacement(std::move(pool), spec.size, rng);
  std::sort(col.member_ids.begin(), col.member_ids.end());
  return true;
}

std::string default_title(const CollectionSpec& spec) {
  std::string t;
  if (spec.theme_filters & kVeganOnly) t += "Vegan ";
  if (spec.theme_filters & kFreeDeliveryOnly) t += "Free Delivery ";
  for (std::size_t i = 0; i < spec.taxonomies.size(); ++i) {
    t += (i ? "+" : "") + std::string("Taxonomy") + std::to_string(spec.taxonomies[i]) + " ";
  }
  t += spec.kind == CollectionKind::kDish ? "Dishes" : "Restaurants";
  return t;
}

CollectionSpec random_spec(const MarketplaceConfig& c, Rng& rng) {
  CollectionSpec spec;
  spec.size = c.min_collection_size +
              static_cast<std::uint32_t>(rng.index(c.max_collection_size - c.min_collection_size + 1));
  const double u = rng.uniform();
  if (u < 0.35) {
    spec.kind = CollectionKind::kDish;
    spec.taxonomies = {static_cast<std::uint32_t>(rng.index(c.taxonomies))};
  } else if (u < 0.65) {
    spec.kind = CollectionKind::kRestaurant;
    spec.taxonomies = {static_cast<std::uint32_t>(rng.index(c.taxonomies))};
  } else if (u < 0.85) {
    spec.kind = CollectionKind::kDish;
    const auto a = static_cast<std::uint32_t>(rng.index(c.taxonomies));
    const auto b = static_cast<std::uint32_t>(rng.index(c.taxonomies));
    spec.taxonomies = a == b ? std::vector<std::uint32_t>{a} : std::vector<std::uint32_t>{a, b};
  } else if (u < 0.93) {
    spec.kind = CollectionKind::kDish;
    spec.theme_filters = kVeganOnly;
  } else {
    spec.kind = CollectionKind::kRestaurant;
    spec.theme_filters = kFreeDeliveryOnly;
  }
  return spec;
}

}  // namespace

// ---------------------------------------------------------------------------
// Generation.

const Collection& Marketplace::collection(CollectionId id) const {
  if (id.index() < collections.size()) return collections[id.index()];
  const std::size_t k = id.index() - collections.size();
  if (k < categories.size()) return categories[k];
  throw Error("unknown collection id " + std::to_string(id.value));
}

std::vector<CollectionId> Marketplace::eligible_collections(HomeId home) const {
  std::vector<CollectionId> out;
  for (const auto& c : collections) {
    if (std::find(c.eligible_homes.begin(), c.eligible_homes.end(), home) != c.eligible_homes.end()) {
      out.push_back(c.id);
    }
  }
  return out;
}

std::vector<CollectionId> Marketplace::category_ids() const {
  std::vector<CollectionId> out;
  out.reserve(categories.size());
  for (const auto& c : categories) out.push_back(c.id);
  return out;
}

Marketplace generate_marketplace(const MarketplaceConfig& config, std::uint64_t seed) {
  validate(config);
  Marketplace m;
  m.config = config;
  m.seed = seed;
  Rng rng(derive_seed(seed, "marketplace"));

  for (std::uint32_t r = 0; r < config.regions; ++r) m.regions.emplace_back(r);
  for (std::uint32_t t = 0; t < config.taxonomies; ++t) m.taxonomies.emplace_back(t);
  for (std::uint32_t h = 0; h < config.home_multipliers.size(); ++h) {
    m.homes.push_back(Home{HomeId(h), config.home_multipliers[h]});
  }

  // Restaurants: balanced regions, exact free-delivery count.
  std::vector<std::uint32_t> region_of(config.restaurants);
  for (std::uint32_t i = 0; i < config.restaurants; ++i) region_of[i] = i % config.regions;
  rng.shuffle(region_of);
  const auto free_flags = exact_flags(config.restaurants, config.free_delivery_fraction, rng);
  m.restaurants.resize(config.restaurants);
  for (std::uint32_t i = 0; i < config.restaurants; ++i) {
    auto& r = m.restaurants[i];
    r.id = RestaurantId(i);
    r.region = RegionId(region_of[i]);
    r.primary_taxonomy = TaxonomyId(static_cast<std::uint32_t>(rng.index(config.taxonomies)));
    r.delivery_fee = free_flags[i] ? 0.0 : round_cents(rng.uniform(config.fee_min, config.fee_max));
  }

  // Dishes: the first `restaurants` dishes seed one per restaurant.
  const auto vegan_flags = exact_flags(config.dishes, config.vegan_dish_fraction, rng);
  m.dishes.resize(config.dishes);
  for (std::uint32_t i = 0; i < config.dishes; ++i) {
    auto& d = m.dishes[i];
    d.id = DishId(i);
    const std::uint32_t rest =
        i < config.restaurants ? i : static_cast<std::uint32_t>(rng.index(config.restaurants));
    d.restaurant = RestaurantId(rest);
    d.taxonomy = rng.bernoulli(config.primary_taxonomy_share)
                     ? m.restaurants[rest].primary_taxonomy
                     : TaxonomyId(static_cast<std::uint32_t>(rng.index(config.taxonomies)));
    d.price = round_cents(rng.uniform(config.price_min, config.price_max));
    d.is_vegan = vegan_flags[i];
    m.restaurants[rest].dishes.push_back(d.id);
  }

  // (region, taxonomy) -> dishes, for organic ordering.
  const std::size_t T = config.taxonomies;
  std::vector<std::vector<DishId>> by_region_tax(config.regions * T);
  std::vector<std::vector<DishId>> by_tax(T);
  for (const auto& d : m.dishes) {
    const auto region = m.restaurants[d.restaurant.index()].region.index();
    by_region_tax[region * T + d.taxonomy.index()].push_back(d.id);
    by_tax[d.taxonomy.index()].push_back(d.id);
  }

  // Users.
  std::vector<std::uint32_t> user_region(config.users);
  for (std::uint32_t i = 0; i < config.users; ++i) user_region[i] = i % config.regions;
  rng.shuffle(user_region);
  const auto vegan_users = exact_flags(config.users, config.vegan_user_fraction, rng);
  const auto cold_users = exact_flags(config.users, config.cold_user_fraction, rng);
  m.users.resize(config.users);
  for (std::uint32_t i = 0; i < config.users; ++i) {
    auto& u = m.users[i];
    u.id = UserId(i);
    u.region = RegionId(user_region[i]);
    u.is_vegan = vegan_users[i];
    for (auto& taste : u.latent_taste) taste = dirichlet(rng, T, config.taste_concentration);
    u.price_sensitivity = rng.uniform(0.0, config.price_sensitivity_max);
  }

  const auto history_seconds =
      static_cast<std::int64_t>(config.history_days * static_cast<double>(kSecondsPerDay));
  const std::int64_t history_days_whole = std::max<std::int64_t>(1, history_seconds / kSecondsPerDay);
  for (auto& u : m.users) {
    if (cold_users[u.id.index()]) continue;
    Rng urng(derive_seed(seed, "history", u.id.value));
    const int n = urng.poisson(config.orders_per_user);
    std::vector<std::vector<DishId>> previous(T);
    for (int k = 0; k < n; ++k) {
      const auto day = static_cast<std::int64_t>(urng.index(static_cast<std::size_t>(history_days_whole)));
      const Timestamp day_start = config.epoch - (day + 1) * kSecondsPerDay;
      const Timestamp ts = sample_timestamp(day_start, urng.uniform(), urng.uniform());
      const MealShift shift = meal_shift_of(ts);
      const std::size_t tax = sample_weighted(u.latent_taste[shift_index(shift)], urng.uniform());
      DishId dish;
      if (!previous[tax].empty() && urng.bernoulli(config.reorder_probability)) {
        dish = previous[tax][urng.index(previous[tax].size())];
      } else {
        const auto* pool = &by_region_tax[u.region.index() * T + tax];
        if (pool->empty()) pool = &by_tax[tax];
        if (pool->empty()) continue;
        std::vector<DishId> vegan_pool;
        if (u.is_vegan) {
          for (DishId d : *pool) {
            if (m.dishes[d.index()].is_vegan) vegan_pool.push_back(d);
          }
          if (!vegan_pool.empty()) pool = &vegan_pool;
        }
        dish = (*pool)[urng.index(pool->size())];
        previous[tax].push_back(dish);
      }
      u.orders.push_back(Order{u.id, dish, ts, shift, OrderSource::kOrganic, {}, {}});
    }
    std::stable_sort(u.orders.begin(), u.orders.end(),
                     [](const Order& a, const Order& b) { return a.timestamp < b.timestamp; });
  }

  // RED collections.
  Rng crng(derive_seed(seed, "collections"));
  const std::size_t n_homes = m.homes.size();
  for (std::uint32_t i = 0; i < config.collections; ++i) {
    Collection col;
    col.id = CollectionId(i);
    CollectionSpec spec;
    if (!config.collection_specs.empty()) {
      spec = config.collection_specs[i];
      if (!fill_members(col, spec, m, crng)) {
        throw ConfigError("collection '" + spec.title + "' has no candidate members");
      }
    } else {
      spec = random_spec(config, crng);
      while (!fill_members(col, spec, m, crng)) {
        spec.theme_filters = kNoFilter;
        spec.taxonomies = {static_cast<std::uint32_t>(crng.index(config.taxonomies))};
      }
    }
    col.title = spec.title.empty() ? default_title(spec) : spec.title;
    if (!spec.homes.empty()) {
      for (auto h : spec.homes) col.eligible_homes.emplace_back(h);
    } else {
      for (std::size_t h = 0; h < n_homes; ++h) {
        if (crng.bernoulli(0.6)) col.eligible_homes.emplace_back(static_cast<std::uint32_t>(h));
      }
      if (col.eligible_homes.empty()) {
        col.eligible_homes.emplace_back(static_cast<std::uint32_t>(crng.index(n_homes)));
      }
    }
    m.collections.push_back(std::move(col));
  }
  if (config.collection_specs.empty() && m.collections.size() >= 2) {
    // Every home needs at least two collections for pair exploration.
    for (std::size_t h = 0; h < n_homes; ++h) {
      const HomeId home(static_cast<std::uint32_t>(h));
      while (m.eligible_collections(home).size() < 2) {
        auto& c = m.collections[crng.index(m.collections.size())];
        if (std::find(c.eligible_homes.begin(), c.eligible_homes.end(), home) == c.eligible_homes.end()) {
          c.eligible_homes.push_back(home);
        }
      }
    }
  }
  for (auto& c : m.collections) std::sort(c.eligible_homes.begin(), c.eligible_homes.end());

  // Category carousel: one entry per non-empty taxonomy.
  if (config.category_carousel) {
    for (std::uint32_t t = 0; t < T; ++t) {
      if (by_tax[t].empty()) continue;
      Collection cat;
      cat.id = CollectionId(static_cast<std::uint32_t>(m.collections.size() + m.categories.size()));
      cat.kind = CollectionKind::kDish;
      cat.is_category = true;
      cat.title = "Category " + std::to_string(t);
      for (DishId d : by_tax[t]) cat.member_ids.push_back(d.value);
      m.categories.push_back(std::move(cat));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Collection-derived quantities.

std::vector<RestaurantId> member_restaurants(const Collection& c, const Marketplace& m) {
  std::vector<RestaurantId> out;
  if (c.kind == CollectionKind::kRestaurant) {
    for (auto id : c.member_ids) out.emplace_back(id);
  } else {
    for (auto id : c.member_ids) out.push_back(m.dishes.at(id).restaurant);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<DishId> member_dishes(const Collection& c, const Marketplace& m) {
  std::vector<DishId> out;
  if (c.kind == CollectionKind::kDish) {
    for (auto id : c.member_ids) out.emplace_back(id);
  } else {
    for (auto id : c.member_ids) {
      const auto& ds = m.restaurants.at(id).dishes;
      out.insert(out.end(), ds.begin(), ds.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> taxonomy_histogram(const Collection& c, const Marketplace& m) {
  const std::size_t T = m.taxonomies.size();
  std::vector<double> hist(T, 0.0);
  if (c.member_ids.empty()) return hist;
  if (c.kind == CollectionKind::kDish) {
    for (auto id : c.member_ids) hist[m.dishes.at(id).taxonomy.index()] += 1.0;
    for (auto& h : hist) h /= static_cast<double>(c.member_ids.size());
  } else {
    for (auto id : c.member_ids) {
      const auto& r = m.restaurants.at(id);
      for (DishId d : r.dishes) {
        hist[m.dishes[d.index()].taxonomy.index()] += 1.0 / static_cast<double>(r.dishes.size());
      }
    }
    for (auto& h : hist) h /= static_cast<double>(c.member_ids.size());
  }
  return hist;
}

double mean_delivery_fee(const Collection& c, const Marketplace& m) {
  const auto rs = member_restaurants(c, m);
  if (rs.empty()) return 0.0;
  double total = 0.0;
  for (auto r : rs) total += m.restaurants[r.index()].delivery_fee;
  return total / static_cast<double>(rs.size());
}

Marketplace with_session_orders(const Marketplace& market, std::span<const SessionEvent> events) {
  Marketplace out = market;
  for (const auto& e : events) {
    if (!e.purchased || !e.purchased_dish) continue;
    Order o;
    o.user = e.user;
    o.dish = *e.purchased_dish;
    o.timestamp = e.context.timestamp;
    o.shift = e.context.shift;
    o.source = e.surface == Surface::kRed ? OrderSource::kRedCard : OrderSource::kCarousel;
    if (e.surface == Surface::kRed) o.home = e.context.home;
    o.collection = e.purchased;
    out.users.at(e.user.index()).orders.push_back(o);
  }
  for (auto& u : out.users) {
    std::stable_sort(u.orders.begin(), u.orders.end(),
                     [](const Order& a, const Order& b) { return a.timestamp < b.timestamp; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Choice model.

ChoiceModel::ChoiceModel(const Marketplace& market, std::vector<double> utility_bias)
    : market_(&market), bias_(std::move(utility_bias)) {
  const std::size_t n = market.collections.size() + market.categories.size();
  bias_.resize(n, 0.0);
  histograms_.reserve(n);
  mean_fees_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = market.collection(CollectionId(static_cast<std::uint32_t>(i)));
    histograms_.push_back(taxonomy_histogram(c, market));
    mean_fees_.push_back(mean_delivery_fee(c, market));
  }
  for (const auto& h : market.homes) home_multipliers_.push_back(h.conversion_multiplier);
}

double ChoiceModel::affinity(const User& user, CollectionId c, MealShift shift) const {
  const auto& taste = user.latent_taste[shift_index(shift)];
  const auto& hist = histograms_.at(c.index());
  double a = 0.0;
  for (std::size_t t = 0; t < taste.size(); ++t) a += taste[t] * hist[t];
  a -= user.price_sensitivity * mean_fees_[c.index()];
  const auto& col = market_->collection(c);
  if (user.is_vegan && col.has_filter(kVeganOnly)) a += market_->config.choice.vegan_bonus;
  return a;
}

double ChoiceModel::utility(const User& user, CollectionId c, MealShift shift) const {
  return affinity(user, c, shift) / market_->config.choice.temperature + bias_.at(c.index());
}

std::vector<double> ChoiceModel::purchase_weights(const User& user, const Context& ctx,
                                                  std::span<const CollectionId> displayed) const {
  const auto& choice = market_->config.choice;
  const std::size_t k = displayed.size();
  std::vector<double> weights(k + 1, 0.0);
  std::vector<double> logits(k + 1);
  bool forced = false;
  for (std::size_t i = 0; i < k; ++i) {
    const double u = utility(user, displayed[i], ctx.shift);
    if (std::isinf(u) && u > 0.0) forced = true;
    logits[i] = u;
  }
  if (forced) {
    for (std::size_t i = 0; i < k; ++i) weights[i] = std::isinf(logits[i]) && logits[i] > 0 ? 1.0 : 0.0;
    return weights;
  }
  const double home_log =
      ctx.home.index() < home_multipliers_.size() ? std::log(home_multipliers_[ctx.home.index()]) : 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    logits[i] += home_log + static_cast<double>(i) * std::log(choice.position_decay);
  }
  logits[k] = choice.outside_utility / choice.temperature;
  const double mx = *std::max_element(logits.begin(), logits.end());
  for (std::size_t i = 0; i <= k; ++i) weights[i] = std::exp(logits[i] - mx);
  return weights;
}

// ---------------------------------------------------------------------------
// Policies and simulation.

FixedOrderPolicy::FixedOrderPolicy(std::vector<CollectionId> preference, std::size_t k) : k_(k) {
  std::uint32_t max_id = 0;
  for (auto c : preference) max_id = std::max(max_id, c.value);
  rank_.assign(max_id + 1, preference.size());
  for (std::size_t i = 0; i < preference.size(); ++i) rank_[preference[i].index()] = i;
}

Display FixedOrderPolicy::choose(const User&, const Context&,
                                 std::span<const CollectionId> eligible, Rng&) const {
  Display d;
  d.ids.assign(eligible.begin(), eligible.end());
  auto rank = [&](CollectionId c) {
    return c.index() < rank_.size() ? rank_[c.index()] : rank_.size();
  };
  std::stable_sort(d.ids.begin(), d.ids.end(), [&](CollectionId a, CollectionId b) {
    return std::pair(rank(a), a) < std::pair(rank(b), b);
  });
  if (d.ids.size() > k_) d.ids.resize(k_);
  return d;
}

Display UniformRandomPolicy::choose(const User&, const Context&,
                                    std::span<const CollectionId> eligible, Rng& rng) const {
  Display d;
  d.ids = sample_without_replacement(std::vector<CollectionId>(eligible.begin(), eligible.end()),
                                     k_, rng);
  return d;
}

std::vector<SessionEvent> simulate_sessions(const Marketplace& market, const DisplayPolicy& policy,
                                            std::size_t n_sessions, std::uint64_t seed,
                                            const SimulationOptions& options) {
  std::vector<SessionEvent> events;
  if (n_sessions == 0) return events;
  if (options.horizon_days == 0) throw ConfigError("simulation horizon_days must be >= 1");
  events.reserve(n_sessions);
  const ChoiceModel model(market, options.utility_bias);
  const auto categories = market.category_ids();
  std::vector<std::vector<CollectionId>> eligible_by_home;
  for (const auto& h : market.homes) eligible_by_home.push_back(market.eligible_collections(h.id));

  std::vector<UserId> pool = options.user_pool;
  if (pool.empty()) {
    for (const auto& u : market.users) pool.push_back(u.id);
  }

  for (std::size_t i = 0; i < n_sessions; ++i) {
    // Fixed draw budget per session keeps streams aligned across policies.
    Rng rng(derive_seed(seed, "session", i));
    const double u_user = rng.uniform();
    const double u_day = rng.uniform();
    const double u_shift = rng.uniform();
    const double u_time = rng.uniform();
    const double u_home = rng.uniform();
    const double u_choice = rng.uniform();
    const double u_dish = rng.uniform();
    Rng policy_rng(derive_seed(seed, "policy", i));

    SessionEvent e;
    const auto& user = market.user(pool[std::min(pool.size() - 1, static_cast<std::size_t>(u_user * static_cast<double>(pool.size())))]);
    e.user = user.id;
    e.surface = options.surface;
    const auto day = static_cast<std::int64_t>(u_day * options.horizon_days);
    e.context.timestamp = sample_timestamp(market.epoch() + day * kSecondsPerDay, u_shift, u_time);
    e.context.shift = meal_shift_of(e.context.timestamp);
    e.context.region = user.region;

    std::span<const CollectionId> eligible;
    if (options.surface == Surface::kRed) {
      const auto h = std::min(market.homes.size() - 1,
                              static_cast<std::size_t>(u_home * static_cast<double>(market.homes.size())));
      e.context.home = market.homes[h].id;
      eligible = eligible_by_home[h];
    } else {
      e.context.home = kCarouselHome;
      eligible = categories;
    }
    if (eligible.empty()) {
      events.push_back(std::move(e));
      continue;
    }

    Display display = policy.choose(user, e.context, eligible, policy_rng);
    for (std::size_t a = 0; a < display.ids.size(); ++a) {
      const auto id = display.ids[a];
      if (std::find(eligible.begin(), eligible.end(), id) == eligible.end()) {
        throw PolicyViolationError("policy displayed collection " + std::to_string(id.value) +
                                   " which is not eligible for home " +
                                   std::to_string(e.context.home.value));
      }
      for (std::size_t b = 0; b < a; ++b) {
        if (display.ids[b] == id) {
          throw PolicyViolationError("policy displayed collection " + std::to_string(id.value) +
                                     " twice");
        }
      }
    }
    e.displayed = std::move(display.ids);
    e.exploration = display.exploration;

    if (!e.displayed.empty()) {
      const auto weights = model.purchase_weights(user, e.context, e.displayed);
      const std::size_t pick = sample_weighted(weights, u_choice);
      if (pick < e.displayed.size()) {
        const CollectionId bought = e.displayed[pick];
        e.purchased = bought;
        const auto dishes = member_dishes(market.collection(bought), market);
        const auto& taste = user.latent_taste[shift_index(e.context.shift)];
        std::vector<double> dw(dishes.size());
        for (std::size_t d = 0; d < dishes.size(); ++d) {
          dw[d] = taste[market.dish(dishes[d]).taxonomy.index()] + 1e-3;
        }
        e.purchased_dish = dishes[sample_weighted(dw, u_dish)];
      }
    }
    events.push_back(std::move(e));
  }
  return events;
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

std::string kind_name(CollectionKind k) { return k == CollectionKind::kDish ? "DISH" : "RESTAURANT"; }

CollectionKind parse_kind(const std::string& s) {
  if (s == "DISH" || s == "dish") return CollectionKind::kDish;
  if (s == "RESTAURANT" || s == "restaurant") return CollectionKind::kRestaurant;
  throw ConfigError("unknown collection kind '" + s + "'");
}

std::uint8_t parse_theme(const json& j) {
  std::uint8_t f = kNoFilter;
  for (const auto& item : j) {
    const auto s = item.get<std::string>();
    if (s == "vegan_only") {
      f |= kVeganOnly;
    } else if (s == "free_delivery_only") {
      f |= kFreeDeliveryOnly;
    } else {
      throw ConfigError("unknown theme filter '" + s + "'");
    }
  }
  return f;
}

json theme_json(std::uint8_t f) {
  json j = json::array();
  if (f & kVeganOnly) j.push_back("vegan_only");
  if (f & kFreeDeliveryOnly) j.push_back("free_delivery_only");
  return j;
}

std::string source_name(OrderSource s) {
  switch (s) {
    case OrderSource::kOrganic: return "ORGANIC";
    case OrderSource::kCarousel: return "CAROUSEL";
    case OrderSource::kRedCard: return "RED_CARD";
  }
  return "ORGANIC";
}

OrderSource parse_source(const std::string& s) {
  if (s == "ORGANIC") return OrderSource::kOrganic;
  if (s == "CAROUSEL") return OrderSource::kCarousel;
  if (s == "RED_CARD") return OrderSource::kRedCard;
  throw CorruptFileError("unknown order source '" + s + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

MarketplaceConfig marketplace_config_from_json(const json& j) {
  MarketplaceConfig c;
  try {
    static const std::set<std::string> known = {
        "schema_version", "regions", "taxonomies", "restaurants", "dishes", "users", "collections",
        "home_multipliers", "vegan_dish_fraction", "vegan_user_fraction", "free_delivery_fraction",
        "cold_user_fraction", "taste_concentration", "price_sensitivity_max", "fee_min", "fee_max",
        "price_min", "price_max", "primary_taxonomy_share", "orders_per_user", "history_days",
        "reorder_probability", "min_collection_size", "max_collection_size", "category_carousel",
        "collection_specs", "epoch_day", "choice"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.contains(it.key())) throw ConfigError("marketplace config: unknown key '" + it.key() + "'");
    }
    read_opt(j, "schema_version", c.schema_version);
    read_opt(j, "regions", c.regions);
    read_opt(j, "taxonomies", c.taxonomies);
    read_opt(j, "restaurants", c.restaurants);
    read_opt(j, "dishes", c.dishes);
    read_opt(j, "users", c.users);
    read_opt(j, "collections", c.collections);
    read_opt(j, "home_multipliers", c.home_multipliers);
    read_opt(j, "vegan_dish_fraction", c.vegan_dish_fraction);
    read_opt(j, "vegan_user_fraction", c.vegan_user_fraction);
    read_opt(j, "free_delivery_fraction", c.free_delivery_fraction);
    read_opt(j, "cold_user_fraction", c.cold_user_fraction);
    read_opt(j, "taste_concentration", c.taste_concentration);
    read_opt(j, "price_sensitivity_max", c.price_sensitivity_max);
    read_opt(j, "fee_min", c.fee_min);
    read_opt(j, "fee_max", c.fee_max);
    read_opt(j, "price_min", c.price_min);
    read_opt(j, "price_max", c.price_max);
    read_opt(j, "primary_taxonomy_share", c.primary_taxonomy_share);
    read_opt(j, "orders_per_user", c.orders_per_user);
    read_opt(j, "history_days", c.history_days);
    read_opt(j, "reorder_probability", c.reorder_probability);
    read_opt(j, "min_collection_size", c.min_collection_size);
    read_opt(j, "max_collection_size", c.max_collection_size);
    read_opt(j, "category_carousel", c.category_carousel);
    if (auto it = j.find("epoch_day"); it != j.end()) {
      c.epoch = it->get<std::int64_t>() * kSecondsPerDay;
    }
    if (auto it = j.find("choice"); it != j.end()) {
      read_opt(*it, "temperature", c.choice.temperature);
      read_opt(*it, "outside_utility", c.choice.outside_utility);
      read_opt(*it, "position_decay", c.choice.position_decay);
      read_opt(*it, "vegan_bonus", c.choice.vegan_bonus);
    }
    if (auto it = j.find("collection_specs"); it != j.end()) {
      for (const auto& s : *it) {
        CollectionSpec spec;
        spec.kind = parse_kind(s.value("kind", std::string("DISH")));
        read_opt(s, "taxonomies", spec.taxonomies);
        if (auto f = s.find("theme_filters"); f != s.end()) spec.theme_filters = parse_theme(*f);
        read_opt(s, "size", spec.size);
        read_opt(s, "homes", spec.homes);
        read_opt(s, "title", spec.title);
        c.collection_specs.push_back(std::move(spec));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("marketplace config: ") + e.what());
  }
  return c;
}

json to_json(const MarketplaceConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["regions"] = c.regions;
  j["taxonomies"] = c.taxonomies;
  j["restaurants"] = c.restaurants;
  j["dishes"] = c.dishes;
  j["users"] = c.users;
  j["collections"] = c.collections;
  j["home_multipliers"] = c.home_multipliers;
  j["vegan_dish_fraction"] = c.vegan_dish_fraction;
  j["vegan_user_fraction"] = c.vegan_user_fraction;
  j["free_delivery_fraction"] = c.free_delivery_fraction;
  j["cold_user_fraction"] = c.cold_user_fraction;
  j["taste_concentration"] = c.taste_concentration;
  j["price_sensitivity_max"] = c.price_sensitivity_max;
  j["fee_min"] = c.fee_min;
  j["fee_max"] = c.fee_max;
  j["price_min"] = c.price_min;
  j["price_max"] = c.price_max;
  j["primary_taxonomy_share"] = c.primary_taxonomy_share;
  j["orders_per_user"] = c.orders_per_user;
  j["history_days"] = c.history_days;
  j["reorder_probability"] = c.reorder_probability;
  j["min_collection_size"] = c.min_collection_size;
  j["max_collection_size"] = c.max_collection_size;
  j["category_carousel"] = c.category_carousel;
  j["epoch_day"] = c.epoch / kSecondsPerDay;
  j["choice"] = {{"temperature", c.choice.temperature},
                 {"outside_utility", c.choice.outside_utility},
                 {"position_decay", c.choice.position_decay},
                 {"vegan_bonus", c.choice.vegan_bonus}};
  json specs = json::array();
  for (const auto& s : c.collection_specs) {
    specs.push_back({{"kind", kind_name(s.kind)},
                     {"taxonomies", s.taxonomies},
                     {"theme_filters", theme_json(s.theme_filters)},
                     {"size", s.size},
                     {"homes", s.homes},
                     {"title", s.title}});
  }
  if (!specs.empty()) j["collection_specs"] = specs;
  return j;
}

namespace {

json collection_json(const Collection& c) {
  json homes = json::array();
  for (auto h : c.eligible_homes) homes.push_back(h.value);
  return {{"id", c.id.value},          {"kind", kind_name(c.kind)},
          {"members", c.member_ids},   {"theme_filters", theme_json(c.theme_filters)},
          {"homes", homes},            {"title", c.title},
          {"is_category", c.is_category}};
}

Collection collection_from(const json& j) {
  Collection c;
  c.id = CollectionId(j.at("id").get<std::uint32_t>());
  c.kind = parse_kind(j.at("kind").get<std::string>());
  c.member_ids = j.at("members").get<std::vector<std::uint32_t>>();
  c.theme_filters = parse_theme(j.at("theme_filters"));
  for (auto h : j.at("homes")) c.eligible_homes.emplace_back(h.get<std::uint32_t>());
  c.title = j.at("title").get<std::string>();
  c.is_category = j.at("is_category").get<bool>();
  return c;
}

json order_json(const Order& o) {
  json j = {{"dish", o.dish.value},
            {"ts", o.timestamp},
            {"shift", shift_name(o.shift)},
            {"source", source_name(o.source)}};
  if (o.home) j["home"] = o.home->value;
  if (o.collection) j["collection"] = o.collection->value;
  return j;
}

}  // namespace

std::string serialize_marketplace(const Marketplace& m) {
  json j;
  j["format"] = "red-marketplace";
  j["version"] = 1;
  j["config"] = to_json(m.config);
  j["seed"] = m.seed;
  json homes = json::array();
  for (const auto& h : m.homes) homes.push_back({{"id", h.id.value}, {"multiplier", h.conversion_multiplier}});
  j["homes"] = homes;
  json rests = json::array();
  for (const auto& r : m.restaurants) {
    json dishes = json::array();
    for (auto d : r.dishes) dishes.push_back(d.value);
    rests.push_back({{"id", r.id.value},
                     {"region", r.region.value},
                     {"primary_taxonomy", r.primary_taxonomy.value},
                     {"delivery_fee", r.delivery_fee},
                     {"dishes", dishes}});
  }
  j["restaurants"] = rests;
  json dishes = json::array();
  for (const auto& d : m.dishes) {
    dishes.push_back({{"id", d.id.value},
                      {"restaurant", d.restaurant.value},
                      {"taxonomy", d.taxonomy.value},
                      {"price", d.price},
                      {"vegan", d.is_vegan}});
  }
  j["dishes"] = dishes;
  json users = json::array();
  for (const auto& u : m.users) {
    json taste = json::array();
    for (const auto& row : u.latent_taste) taste.push_back(row);
    json orders = json::array();
    for (const auto& o : u.orders) orders.push_back(order_json(o));
    users.push_back({{"id", u.id.value},
                     {"region", u.region.value},
                     {"vegan", u.is_vegan},
                     {"latent_taste", taste},
                     {"price_sensitivity", u.price_sensitivity},
                     {"orders", orders}});
  }
  j["users"] = users;
  json cols = json::array();
  for (const auto& c : m.collections) cols.push_back(collection_json(c));
  j["collections"] = cols;
  json cats = json::array();
  for (const auto& c : m.categories) cats.push_back(collection_json(c));
  j["categories"] = cats;
  return j.dump() + "\n";
}

Marketplace parse_marketplace(std::string_view text) {
  Marketplace m;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string()) != "red-marketplace") {
      throw CorruptFileError("not a marketplace file");
    }
    if (j.at("version").get<int>() > 1) {
      throw VersionError("marketplace file version " + std::to_string(j.at("version").get<int>()) +
                         " is newer than supported version 1");
    }
    m.config = marketplace_config_from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    for (std::uint32_t r = 0; r < m.config.regions; ++r) m.regions.emplace_back(r);
    for (std::uint32_t t = 0; t < m.config.taxonomies; ++t) m.taxonomies.emplace_back(t);
    for (const auto& h : j.at("homes")) {
      m.homes.push_back(Home{HomeId(h.at("id").get<std::uint32_t>()), h.at("multiplier").get<double>()});
    }
    for (const auto& r : j.at("restaurants")) {
      Restaurant x;
      x.id = RestaurantId(r.at("id").get<std::uint32_t>());
      x.region = RegionId(r.at("region").get<std::uint32_t>());
      x.primary_taxonomy = TaxonomyId(r.at("primary_taxonomy").get<std::uint32_t>());
      x.delivery_fee = r.at("delivery_fee").get<double>();
      for (auto d : r.at("dishes")) x.dishes.emplace_back(d.get<std::uint32_t>());
      m.restaurants.push_back(std::move(x));
    }
    for (const auto& d : j.at("dishes")) {
      m.dishes.push_back(Dish{DishId(d.at("id").get<std::uint32_t>()),
                              RestaurantId(d.at("restaurant").get<std::uint32_t>()),
                              TaxonomyId(d.at("taxonomy").get<std::uint32_t>()),
                              d.at("price").get<double>(), d.at("vegan").get<bool>()});
    }
    for (const auto& u : j.at("users")) {
      User x;
      x.id = UserId(u.at("id").get<std::uint32_t>());
      x.region = RegionId(u.at("region").get<std::uint32_t>());
      x.is_vegan = u.at("vegan").get<bool>();
      const auto& taste = u.at("latent_taste");
      for (std::size_t s = 0; s < kNumShifts; ++s) x.latent_taste[s] = taste.at(s).get<std::vector<double>>();
      x.price_sensitivity = u.at("price_sensitivity").get<double>();
      for (const auto& o : u.at("orders")) {
        Order ord;
        ord.user = x.id;
        ord.dish = DishId(o.at("dish").get<std::uint32_t>());
        ord.timestamp = o.at("ts").get<Timestamp>();
        ord.shift = parse_shift(o.at("shift").get<std::string>());
        ord.source = parse_source(o.at("source").get<std::string>());
        if (o.contains("home")) ord.home = HomeId(o.at("home").get<std::uint32_t>());
        if (o.contains("collection")) ord.collection = CollectionId(o.at("collection").get<std::uint32_t>());
        x.orders.push_back(ord);
      }
      m.users.push_back(std::move(x));
    }
    for (const auto& c : j.at("collections")) m.collections.push_back(collection_from(c));
    for (const auto& c : j.at("categories")) m.categories.push_back(collection_from(c));
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("marketplace file: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptFileError(std::string("marketplace file: ") + e.what());
  }
  return m;
}

void write_session_log(std::ostream& out, std::span<const SessionEvent> events) {
  for (const auto& e : events) {
    json ids = json::array();
    for (auto c : e.displayed) ids.push_back(c.value);
    json j = {{"user", e.user.value},
              {"ts", e.context.timestamp},
              {"shift", shift_name(e.context.shift)},
              {"home", e.context.home.value},
              {"region", e.context.region.value},
              {"surface", e.surface == Surface::kRed ? "RED" : "CAROUSEL"},
              {"displayed", ids},
              {"purchased", e.purchased ? json(e.purchased->value) : json(nullptr)},
              {"dish", e.purchased_dish ? json(e.purchased_dish->value) : json(nullptr)},
              {"exploration", e.exploration}};
    out << j.dump() << '\n';
  }
}

std::vector<SessionEvent> read_session_log(std::istream& in) {
  std::vector<SessionEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SessionEvent e;
      e.user = UserId(j.at("user").get<std::uint32_t>());
      e.context.timestamp = j.at("ts").get<Timestamp>();
      e.context.shift = parse_shift(j.at("shift").get<std::string>());
      e.context.home = HomeId(j.at("home").get<std::uint32_t>());
      e.context.region = RegionId(j.at("region").get<std::uint32_t>());
      const auto surface = j.at("surface").get<std::string>();
      if (surface != "RED" && surface != "CAROUSEL") throw CorruptFileError("bad surface");
      e.surface = surface == "RED" ? Surface::kRed : Surface::kCarousel;
      for (auto c : j.at("displayed")) e.displayed.emplace_back(c.get<std::uint32_t>());
      if (!j.at("purchased").is_null()) e.purchased = CollectionId(j.at("purchased").get<std::uint32_t>());
      if (!j.at("dish").is_null()) e.purchased_dish = DishId(j.at("dish").get<std::uint32_t>());
      e.exploration = j.at("exploration").get<bool>();
      events.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw CorruptFileError("session log line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const CorruptFileError& ex) {
      throw CorruptFileError("session log line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return events;
}

}  // namespace red
