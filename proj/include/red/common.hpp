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

// Shared vocabulary: strong ids, the error hierarchy, deterministic random
// streams and content hashing.

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace red {

template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}
  constexpr auto operator<=>(const Id&) const = default;
  constexpr std::size_t index() const { return value; }
};

using RegionId = Id<struct RegionTag>;
using TaxonomyId = Id<struct TaxonomyTag>;
using RestaurantId = Id<struct RestaurantTag>;
using DishId = Id<struct DishTag>;
using UserId = Id<struct UserTag>;
using CollectionId = Id<struct CollectionTag>;
using HomeId = Id<struct HomeTag>;

// Seconds since the Unix epoch; local time is taken to be UTC.
using Timestamp = std::int64_t;
inline constexpr std::int64_t kSecondsPerDay = 86400;

// ---------------------------------------------------------------------------
// Errors. Every failure the library reports derives from red::Error so callers
// can map categories onto exit codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};
class SchemaError : public Error {
 public:
  using Error::Error;
};
class TrainingError : public Error {
 public:
  using Error::Error;
};
class MissingEmbeddingError : public Error {
 public:
  using Error::Error;
};
class EmptyRegionError : public Error {
 public:
  using Error::Error;
};
class UndefinedSimilarityError : public Error {
 public:
  using Error::Error;
};
class PolicyViolationError : public Error {
 public:
  using Error::Error;
};
class CorruptFileError : public Error {
 public:
  using Error::Error;
};
class VersionError : public Error {
 public:
  using Error::Error;
};
class ArtifactError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Random streams. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the distributions below are written out so that
// generated data does not depend on the standard library's distribution
// implementations.

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  double normal();
  double gamma(double shape);
  int poisson(double mean);
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Dirichlet draw with a symmetric concentration.
std::vector<double> dirichlet(Rng& rng, std::size_t k, double alpha);

// Index drawn with probability proportional to weights (all >= 0, sum > 0),
// using a single uniform so that callers can share random numbers.
std::size_t sample_weighted(std::span<const double> weights, double u);

// ---------------------------------------------------------------------------
// FNV-1a 64-bit content hash for fingerprints, checksums and manifests.

class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view s);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint64_t fnv1a(std::string_view s);
std::string hex64(std::uint64_t v);

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace red

template <class Tag>
struct std::hash<red::Id<Tag>> {
  std::size_t operator()(const red::Id<Tag>& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
