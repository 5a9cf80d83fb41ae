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


#include <cstdlib>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "red/common.hpp"
#include "red/simd.hpp"

using namespace red;
using simd::KernelTable;

namespace {

struct Inputs {
  std::vector<float> fa, fb;
  std::vector<double> da, db;
};

Inputs random_inputs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Inputs in;
  for (std::size_t i = 0; i < n; ++i) {
    in.fa.push_back(static_cast<float>(rng.normal()));
    in.fb.push_back(static_cast<float>(rng.normal()));
    in.da.push_back(rng.normal());
    in.db.push_back(rng.normal());
  }
  return in;
}

// Rounding bound for a length-n f64 dot product under any summation order.
double dot_tolerance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] * b[i]);
  return 2.0 * static_cast<double>(n + 1) * 0x1.0p-53 * s + 1e-300;
}

}  // namespace

TEST_CASE("dispatch reports a usable ISA") {
  const auto isa = simd::active_isa();
  CHECK((isa == simd::Isa::kScalar || isa == simd::Isa::kAvx2));
  if (const char* env = std::getenv("RED_SIMD"); env && std::strcmp(env, "scalar") == 0) {
    CHECK(isa == simd::Isa::kScalar);
  }
  CHECK(simd::isa_name(simd::Isa::kScalar) == "scalar");
  CHECK(simd::force_isa(simd::Isa::kScalar));
  CHECK(simd::active_isa() == simd::Isa::kScalar);
  CHECK(&simd::active_kernels() == &simd::scalar_kernels());
  if (simd::avx2_kernels() != nullptr) CHECK(simd::force_isa(simd::Isa::kAvx2));
  simd::force_isa(isa);
}

TEST_CASE("scalar kernels match a naive loop exactly") {
  const auto& k = simd::scalar_kernels();
  const auto in = random_inputs(37, 11);
  double ref = 0.0;
  for (std::size_t i = 0; i < 37; ++i) ref += static_cast<double>(in.fa[i]) * in.db[i];
  CHECK(k.dot_fd(in.fa.data(), in.db.data(), 37) == ref);
  std::vector<double> acc(in.da);
  k.accumulate_f(acc.data(), in.fa.data(), 37);
  for (std::size_t i = 0; i < 37; ++i) CHECK(acc[i] == in.da[i] + static_cast<double>(in.fa[i]));
}

TEST_CASE("avx2 kernels are equivalent to the scalar reference") {
  const KernelTable* v = simd::avx2_kernels();
  if (v == nullptr) {
    MESSAGE("AVX2 kernels unavailable on this machine; equivalence not exercised");
    return;
  }
  const auto& s = simd::scalar_kernels();
  for (std::size_t n = 0; n <= 67; ++n) {
    CAPTURE(n);
    const auto in = random_inputs(n, 100 + n);
    std::vector<double> fa(in.fa.begin(), in.fa.end());
    std::vector<double> fb(in.fb.begin(), in.fb.end());

    CHECK(std::abs(v->dot_ff(in.fa.data(), in.fb.data(), n) - s.dot_ff(in.fa.data(), in.fb.data(), n)) <=
          dot_tolerance(fa.data(), fb.data(), n));
    CHECK(std::abs(v->dot_fd(in.fa.data(), in.db.data(), n) - s.dot_fd(in.fa.data(), in.db.data(), n)) <=
          dot_tolerance(fa.data(), in.db.data(), n));
    CHECK(std::abs(v->dot_dd(in.da.data(), in.db.data(), n) - s.dot_dd(in.da.data(), in.db.data(), n)) <=
          dot_tolerance(in.da.data(), in.db.data(), n));

    // Elementwise kernels have no reduction, so they agree bit for bit.
    std::vector<double> a1(in.da), a2(in.da);
    v->accumulate_f(a1.data(), in.fa.data(), n);
    s.accumulate_f(a2.data(), in.fa.data(), n);
    CHECK(a1 == a2);
    v->accumulate_d(a1.data(), in.db.data(), n);
    s.accumulate_d(a2.data(), in.db.data(), n);
    CHECK(a1 == a2);
    v->scale(a1.data(), 0.37, n);
    s.scale(a2.data(), 0.37, n);
    CHECK(a1 == a2);
  }
}

TEST_CASE("span wrappers route through the active table") {
  const std::vector<double> a = {1, 2, 3};
  const std::vector<double> b = {4, 5, 6};
  CHECK(simd::dot(std::span<const double>(a), std::span<const double>(b)) == 32.0);
  std::vector<double> acc = {1, 1, 1};
  simd::accumulate(acc, std::span<const double>(a));
  simd::scale(acc, 2.0);
  CHECK(acc == std::vector<double>{4, 6, 8});
}
