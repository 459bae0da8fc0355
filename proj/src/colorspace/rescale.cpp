#include <algorithm>

#include "mcfuse/colorspace.hpp"
#include "mcfuse/simd/kernels.hpp"

namespace mcfuse {

ImageTensor rescale_0_255(const ImageTensor& img) {
  ImageTensor out = img;
  out.range = RangeTag::rescaled_0_255;
  const auto& k = simd::active();
  const std::size_t n = img.plane_size();
  for (int c = 0; c < 3; ++c) {
    float lo = 0, hi = 0;
    k.minmax_f32(n, img.channel(c), &lo, &hi);
    if (hi > lo)
      k.rescale_round_f32(n, lo, hi, img.channel(c), out.channel(c));
    else
      std::fill_n(out.channel(c), n, 0.0f);
  }
  return out;
}

}  // namespace mcfuse
