#pragma once

namespace mcfuse::simd {

struct CpuFeatures {
  bool avx2 = false;
  bool fma = false;
};

/// Features of the host CPU, probed once.
const CpuFeatures& cpu_features() noexcept;

}  // namespace mcfuse::simd
