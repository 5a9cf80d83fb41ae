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

#include "red/schema.hpp"

#include <set>
#include <sstream>

namespace red {

std::string_view group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::kCollection: return "COLLECTION";
    case FeatureGroup::kUserCollection: return "USER_COLLECTION";
    case FeatureGroup::kContext: return "CONTEXT";
  }
  return "COLLECTION";
}

FeatureGroup parse_group(std::string_view s) {
  if (s == "COLLECTION") return FeatureGroup::kCollection;
  if (s == "USER_COLLECTION") return FeatureGroup::kUserCollection;
  if (s == "CONTEXT") return FeatureGroup::kContext;
  throw SchemaError("unknown feature group '" + std::string(s) + "'");
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (f.name.empty() || f.name.find_first_of(" \t\n:") != std::string::npos) {
      throw SchemaError("invalid feature name '" + f.name + "'");
    }
    if (!seen.insert(f.name).second) throw SchemaError("duplicate feature name '" + f.name + "'");
    if (f.monotone < -1 || f.monotone > 1) {
      throw SchemaError("feature '" + f.name + "' has monotone flag outside {-1,0,1}");
    }
  }
  fingerprint_ = fnv1a(serialize());
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<int> FeatureSchema::monotone() const {
  std::vector<int> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.monotone);
  return out;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

std::string FeatureSchema::serialize() const {
  std::ostringstream out;
  for (const auto& f : features_) {
    out << f.name << '\t' << group_name(f.group) << '\t' << f.monotone << '\t'
        << (f.missing == MissingPolicy::kMarker ? "marker" : "never") << '\t'
        << (f.extension ? 1 : 0) << '\n';
  }
  return out.str();
}

FeatureSchema FeatureSchema::parse(std::string_view text) {
  std::vector<FeatureSpec> specs;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    FeatureSpec f;
    std::string group;
    std::string missing;
    int extension = 0;
    if (!(fields >> f.name >> group >> f.monotone >> missing >> extension)) {
      throw SchemaError("malformed schema line '" + line + "'");
    }
    f.group = parse_group(group);
    if (missing == "marker") {
      f.missing = MissingPolicy::kMarker;
    } else if (missing == "never") {
      f.missing = MissingPolicy::kNever;
    } else {
      throw SchemaError("unknown missing policy '" + missing + "'");
    }
    f.extension = extension != 0;
    specs.push_back(std::move(f));
  }
  return FeatureSchema(std::move(specs));
}

FeatureSchema FeatureSchema::subset(std::span<const std::string> names) const {
  std::set<std::string_view> wanted;
  for (const auto& n : names) {
    if (!index_of(n)) throw SchemaError("feature '" + n + "' is not in the schema");
    wanted.insert(n);
  }
  std::vector<FeatureSpec> out;
  for (const auto& f : features_) {
    if (wanted.contains(f.name)) out.push_back(f);
  }
  return FeatureSchema(std::move(out));
}

std::vector<std::size_t> FeatureSchema::projection_of(const FeatureSchema& other) const {
  std::vector<std::size_t> cols;
  cols.reserve(other.size());
  for (const auto& f : other.features()) {
    const auto i = index_of(f.name);
    if (!i || features_[*i] != f) {
      throw SchemaError("feature '" + f.name + "' does not exist with the same definition");
    }
    cols.push_back(*i);
  }
  return cols;
}

}  // namespace red
