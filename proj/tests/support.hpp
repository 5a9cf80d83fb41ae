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


// Shared fixtures for the unit tests.

#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include "red/marketplace.hpp"
#include "red/simd.hpp"

namespace red::testing {

// A world small enough to build in milliseconds.
inline MarketplaceConfig small_config() {
  MarketplaceConfig c;
  c.regions = 3;
  c.taxonomies = 6;
  c.restaurants = 40;
  c.dishes = 300;
  c.users = 200;
  c.collections = 10;
  c.orders_per_user = 20.0;
  return c;
}

// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("red_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace red::testing
