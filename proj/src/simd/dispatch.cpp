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

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "red/simd.hpp"

namespace red::simd {
namespace {

bool cpu_has_avx2() {
#if defined(RED_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("RED_SIMD"); env && std::strcmp(env, "scalar") == 0) {
    return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

const KernelTable& table_for(Isa isa) {
#if defined(RED_HAVE_AVX2)
  if (isa == Isa::kAvx2) return detail::kAvx2Table;
#endif
  (void)isa;
  return detail::kScalarTable;
}

struct State {
  std::atomic<Isa> isa{detect()};
};

State& state() {
  static State s;
  return s;
}

}  // namespace

const KernelTable* avx2_kernels() {
#if defined(RED_HAVE_AVX2)
  if (cpu_has_avx2()) return &detail::kAvx2Table;
#endif
  return nullptr;
}

const KernelTable& active_kernels() { return table_for(active_isa()); }

Isa active_isa() { return state().isa.load(std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool force_isa(Isa isa) {
  if (isa == Isa::kAvx2 && avx2_kernels() == nullptr) return false;
  state().isa.store(isa, std::memory_order_relaxed);
  return true;
}

}  // namespace red::simd
