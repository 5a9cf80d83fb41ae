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

// Synthetic food-delivery marketplace and the session simulator that stands
// in for production traffic.
//
// The world is a pure function of (MarketplaceConfig, seed). Users carry a
// hidden per-shift taste distribution over taxonomies; the choice model turns
// it into purchase probabilities, which makes the simulator the ground-truth
// oracle for every downstream evaluation.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "red/common.hpp"

namespace red {

enum class MealShift : std::uint8_t { kDawn = 0, kBreakfast, kLunch, kSnack, kDinner };
inline constexpr std::size_t kNumShifts = 5;
inline constexpr std::array<MealShift, kNumShifts> kAllShifts = {
    MealShift::kDawn, MealShift::kBreakfast, MealShift::kLunch, MealShift::kSnack,
    MealShift::kDinner};

// Left-closed local-time buckets: DAWN [00,06) BREAKFAST [06,11) LUNCH [11,15)
// SNACK [15,19) DINNER [19,24).
MealShift meal_shift_of(Timestamp ts);
// First second of day (local) at which `shift` begins, and its length.
std::int64_t shift_start_second(MealShift shift);
std::int64_t shift_length_seconds(MealShift shift);
std::string_view shift_name(MealShift shift);
MealShift parse_shift(std::string_view name);
inline std::size_t shift_index(MealShift s) { return static_cast<std::size_t>(s); }

enum class CollectionKind : std::uint8_t { kDish, kRestaurant };
enum class OrderSource : std::uint8_t { kOrganic, kCarousel, kRedCard };
enum class Surface : std::uint8_t { kRed, kCarousel };

// Collection theme predicates, as a bit set.
enum ThemeFilter : std::uint8_t {
  kNoFilter = 0,
  kVeganOnly = 1u << 0,
  kFreeDeliveryOnly = 1u << 1,
};

// Home used in the context of category-carousel sessions, which are not tied
// to a RED home section.
inline constexpr HomeId kCarouselHome{0xFFFFu};

struct Dish {
  DishId id;
  RestaurantId restaurant;
  TaxonomyId taxonomy;
  double price = 0.0;
  bool is_vegan = false;
};

struct Restaurant {
  RestaurantId id;
  RegionId region;
  TaxonomyId primary_taxonomy;
  double delivery_fee = 0.0;
  std::vector<DishId> dishes;
};

struct Collection {
  CollectionId id;
  CollectionKind kind = CollectionKind::kDish;
  // Dish ids for kDish, restaurant ids for kRestaurant; sorted ascending.
  std::vector<std::uint32_t> member_ids;
  std::uint8_t theme_filters = kNoFilter;
  std::vector<HomeId> eligible_homes;
  std::string title;
  bool is_category = false;

  bool has_filter(ThemeFilter f) const { return (theme_filters & f) != 0; }
};

struct Home {
  HomeId id;
  double conversion_multiplier = 1.0;
};

struct Order {
  UserId user;
  DishId dish;
  Timestamp timestamp = 0;
  MealShift shift = MealShift::kDawn;
  OrderSource source = OrderSource::kOrganic;
  std::optional<HomeId> home;
  std::optional<CollectionId> collection;
};

struct User {
  UserId id;
  RegionId region;
  bool is_vegan = false;
  // Ground truth only: one probability simplex over taxonomies per shift.
  std::array<std::vector<double>, kNumShifts> latent_taste;
  double price_sensitivity = 0.0;
  // Sorted by timestamp.
  std::vector<Order> orders;
};

struct Context {
  MealShift shift = MealShift::kDawn;
  HomeId home;
  RegionId region;
  Timestamp timestamp = 0;
};

struct SessionEvent {
  UserId user;
  Context context;
  Surface surface = Surface::kRed;
  std::vector<CollectionId> displayed;
  std::optional<CollectionId> purchased;
  std::optional<DishId> purchased_dish;
  bool exploration = false;
};

// World parameters of the ground-truth choice model.
struct ChoiceParams {
  double temperature = 0.07;
  double outside_utility = 0.35;
  double position_decay = 0.85;
  double vegan_bonus = 0.25;
};

struct CollectionSpec {
  CollectionKind kind = CollectionKind::kDish;
  std::vector<std::uint32_t> taxonomies;
  std::uint8_t theme_filters = kNoFilter;
  std::uint32_t size = 10;
  std::vector<std::uint32_t> homes;
  std::string title;
};

struct MarketplaceConfig {
  int schema_version = 1;
  std::uint32_t regions = 4;
  std::uint32_t taxonomies = 12;
  std::uint32_t restaurants = 300;
  std::uint32_t dishes = 3000;
  std::uint32_t users = 2000;
  std::uint32_t collections = 36;
  std::vector<double> home_multipliers = {1.6, 1.0, 0.6};

  double vegan_dish_fraction = 0.15;
  double vegan_user_fraction = 0.10;
  double free_delivery_fraction = 0.30;
  double cold_user_fraction = 0.05;

  double taste_concentration = 0.3;
  double price_sensitivity_max = 0.02;
  double fee_min = 2.0;
  double fee_max = 12.0;
  double price_min = 8.0;
  double price_max = 80.0;
  double primary_taxonomy_share = 0.8;

  double orders_per_user = 30.0;
  double history_days = 90.0;
  double reorder_probability = 0.5;

  std::uint32_t min_collection_size = 6;
  std::uint32_t max_collection_size = 20;
  bool category_carousel = true;
  std::vector<CollectionSpec> collection_specs;

  // Start of the simulated traffic window; organic history precedes it.
  Timestamp epoch = 20000 * kSecondsPerDay;
  ChoiceParams choice;
};

struct Marketplace {
  MarketplaceConfig config;
  std::uint64_t seed = 0;
  std::vector<RegionId> regions;
  std::vector<TaxonomyId> taxonomies;
  std::vector<Restaurant> restaurants;
  std::vector<Dish> dishes;
  std::vector<User> users;
  // RED cards. Ids are 0..collections.size()-1.
  std::vector<Collection> collections;
  // Category-carousel entries, ids continue after the RED collections.
  std::vector<Collection> categories;
  std::vector<Home> homes;

  Timestamp epoch() const { return config.epoch; }
  const Collection& collection(CollectionId id) const;
  const User& user(UserId id) const { return users.at(id.index()); }
  const Dish& dish(DishId id) const { return dishes.at(id.index()); }
  const Restaurant& restaurant(RestaurantId id) const { return restaurants.at(id.index()); }
  std::vector<CollectionId> eligible_collections(HomeId home) const;
  std::vector<CollectionId> category_ids() const;
};

Marketplace generate_marketplace(const MarketplaceConfig& config, std::uint64_t seed);

// Unique restaurants behind a collection's members, ascending.
std::vector<RestaurantId> member_restaurants(const Collection& c, const Marketplace& m);
// Unique dishes behind a collection's members, ascending.
std::vector<DishId> member_dishes(const Collection& c, const Marketplace& m);
// Share of each taxonomy in the collection. Dish collections count member
// dishes; restaurant collections average their restaurants' histograms.
std::vector<double> taxonomy_histogram(const Collection& c, const Marketplace& m);
double mean_delivery_fee(const Collection& c, const Marketplace& m);

// Returns a copy of `market` whose user histories include the purchases made
// in `events`.
Marketplace with_session_orders(const Marketplace& market,
                                std::span<const SessionEvent> events);

// ---------------------------------------------------------------------------
// Choice model.

class ChoiceModel {
 public:
  // utility_bias is indexed by collection id (RED collections then
  // categories) and added to the scaled utility; +inf forces the choice.
  explicit ChoiceModel(const Marketplace& market, std::vector<double> utility_bias = {});

  // Ground-truth affinity: taste . histogram - sensitivity * mean fee
  // (+ vegan bonus for vegan users on vegan-only collections).
  double affinity(const User& user, CollectionId c, MealShift shift) const;
  // affinity / temperature + bias.
  double utility(const User& user, CollectionId c, MealShift shift) const;

  // Purchase weights for a display: entry i for displayed[i], last entry is
  // the no-purchase option. Infinite utilities collapse onto a uniform choice
  // among them.
  std::vector<double> purchase_weights(const User& user, const Context& ctx,
                                       std::span<const CollectionId> displayed) const;

  const Marketplace& market() const { return *market_; }

 private:
  const Marketplace* market_;
  std::vector<double> bias_;
  std::vector<std::vector<double>> histograms_;
  std::vector<double> mean_fees_;
  std::vector<double> home_multipliers_;
};

// ---------------------------------------------------------------------------
// Display policies.

struct Display {
  std::vector<CollectionId> ids;
  bool exploration = false;
};

class DisplayPolicy {
 public:
  virtual ~DisplayPolicy() = default;
  virtual Display choose(const User& user, const Context& ctx,
                         std::span<const CollectionId> eligible, Rng& rng) const = 0;
};

// Shows every eligible collection in the given order of preference (used for
// the category carousel, where the incumbent order creates position bias).
class FixedOrderPolicy final : public DisplayPolicy {
 public:
  explicit FixedOrderPolicy(std::vector<CollectionId> preference, std::size_t k);
  Display choose(const User&, const Context&, std::span<const CollectionId> eligible,
                 Rng&) const override;

 private:
  std::vector<std::size_t> rank_;
  std::size_t k_;
};

class UniformRandomPolicy final : public DisplayPolicy {
 public:
  explicit UniformRandomPolicy(std::size_t k) : k_(k) {}
  Display choose(const User&, const Context&, std::span<const CollectionId> eligible,
                 Rng& rng) const override;

 private:
  std::size_t k_;
};

struct SimulationOptions {
  Surface surface = Surface::kRed;
  std::uint32_t horizon_days = 14;
  // Restricts which users can be drawn (empty = everyone).
  std::vector<UserId> user_pool;
  // Per-collection additive utility bias (see ChoiceModel).
  std::vector<double> utility_bias;
};

// Each session draws a user, a timestamp (hence shift) and a home, shows the
// policy's display and samples a purchase. Session i consumes a fixed number
// of draws from its own stream, so two runs that differ only in policy or user
// pool see common random numbers.
std::vector<SessionEvent> simulate_sessions(const Marketplace& market,
                                            const DisplayPolicy& policy,
                                            std::size_t n_sessions, std::uint64_t seed,
                                            const SimulationOptions& options = {});

// Time-of-day traffic shares per shift used by the simulator.
std::array<double, kNumShifts> shift_traffic_weights();

// ---------------------------------------------------------------------------
// Serialization.

MarketplaceConfig marketplace_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MarketplaceConfig& c);

std::string serialize_marketplace(const Marketplace& m);
Marketplace parse_marketplace(std::string_view text);

// Newline-delimited JSON, one session per line.
void write_session_log(std::ostream& out, std::span<const SessionEvent> events);
std::vector<SessionEvent> read_session_log(std::istream& in);

}  // namespace red
