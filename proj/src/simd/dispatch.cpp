#include <cstdlib>
#include <string_view>

#include "mcfuse/simd/cpu.hpp"
#include "mcfuse/simd/kernels.hpp"

namespace mcfuse::simd {

#if defined(MCFUSE_HAVE_AVX2)
const Kernels& avx2_kernel_table() noexcept;
#endif

const Kernels* avx2_kernels() noexcept {
#if defined(MCFUSE_HAVE_AVX2)
  const auto& f = cpu_features();
  if (f.avx2 && f.fma) return &avx2_kernel_table();
#endif
  return nullptr;
}

const Kernels& active() noexcept {
  static const Kernels& chosen = []() -> const Kernels& {
    const char* env = std::getenv("MCFUSE_SIMD");
    const std::string_view want = env ? env : "";
    if (want == "scalar") return scalar_kernels();
    if (const Kernels* k = avx2_kernels()) return *k;
    return scalar_kernels();
  }();
  return chosen;
}

}  // namespace mcfuse::simd
