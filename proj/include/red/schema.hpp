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

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "red/common.hpp"

namespace red {

enum class FeatureGroup : std::uint8_t { kCollection, kUserCollection, kContext };

enum class MissingPolicy : std::uint8_t {
  kNever,   // always a number
  kMarker,  // NaN when undefined; the tree routes it by the learned default
};

struct FeatureSpec {
  std::string name;
  FeatureGroup group = FeatureGroup::kCollection;
  int monotone = 0;  // +1 non-decreasing, -1 non-increasing, 0 free
  MissingPolicy missing = MissingPolicy::kNever;
  bool extension = false;

  bool operator==(const FeatureSpec&) const = default;
};

std::string_view group_name(FeatureGroup g);
FeatureGroup parse_group(std::string_view s);

// Ordered, named feature list. The order is part of the contract: the
// fingerprint hashes the canonical text form, so reordering, renaming or
// changing a monotone flag yields a different schema.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  std::size_t size() const { return features_.size(); }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<int> monotone() const;
  std::vector<std::string> names() const;

  std::uint64_t fingerprint() const { return fingerprint_; }

  // One line per feature: name, group, monotone, missing policy, extension.
  std::string serialize() const;
  static FeatureSchema parse(std::string_view text);

  // Named features in this schema's order; unknown names are a SchemaError.
  FeatureSchema subset(std::span<const std::string> names) const;
  // Column indices of `other`'s features within this schema.
  std::vector<std::size_t> projection_of(const FeatureSchema& other) const;

  bool operator==(const FeatureSchema& other) const { return features_ == other.features_; }

 private:
  std::vector<FeatureSpec> features_;
  std::uint64_t fingerprint_ = 0;
};

struct FeatureVector {
  std::uint64_t schema_fingerprint = 0;
  std::vector<double> values;
};

inline bool is_missing(double v) { return std::isnan(v); }

}  // namespace red
