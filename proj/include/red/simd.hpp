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

// Dense vector kernels used by the embedding and feature code.
//
// Storage is f32 for item vectors and f64 for derived vectors; every kernel
// accumulates in f64. Each kernel has a scalar reference implementation and,
// on x86-64, an AVX2+FMA variant. The variant is chosen once at startup from
// CPUID; setting RED_SIMD=scalar in the environment forces the reference
// path. The two paths agree to within summation-order rounding, which the
// equivalence tests bound.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace red::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  double (*dot_ff)(const float* a, const float* b, std::size_t n);
  double (*dot_fd)(const float* a, const double* b, std::size_t n);
  double (*dot_dd)(const double* a, const double* b, std::size_t n);
  // acc[i] += x[i]
  void (*accumulate_f)(double* acc, const float* x, std::size_t n);
  void (*accumulate_d)(double* acc, const double* x, std::size_t n);
  // x[i] *= s
  void (*scale)(double* x, double s, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_kernels();

const KernelTable& active_kernels();
Isa active_isa();
std::string_view isa_name(Isa isa);

// Overrides the dispatch decision; returns false if the ISA is unavailable.
bool force_isa(Isa isa);

inline double dot(std::span<const float> a, std::span<const float> b) {
  return active_kernels().dot_ff(a.data(), b.data(), a.size());
}
inline double dot(std::span<const float> a, std::span<const double> b) {
  return active_kernels().dot_fd(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot_dd(a.data(), b.data(), a.size());
}
inline void accumulate(std::span<double> acc, std::span<const float> x) {
  active_kernels().accumulate_f(acc.data(), x.data(), acc.size());
}
inline void accumulate(std::span<double> acc, std::span<const double> x) {
  active_kernels().accumulate_d(acc.data(), x.data(), acc.size());
}
inline void scale(std::span<double> x, double s) {
  active_kernels().scale(x.data(), s, x.size());
}

namespace detail {
extern const KernelTable kScalarTable;
#if defined(RED_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
}  // namespace detail

}  // namespace red::simd
