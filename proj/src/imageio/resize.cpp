#include <algorithm>
#include <cmath>
#include <vector>

#include "mcfuse/error.hpp"
#include "mcfuse/imageio.hpp"

namespace mcfuse::imageio {
namespace {

struct Tap {
  int i0, i1;
  double w1;
};

// Source taps for each destination index, half-pixel centre convention.
std::vector<Tap> taps(int src, int dst) {
  std::vector<Tap> t(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int x = 0; x < dst; ++x) {
    double s = (x + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    t[x] = {i0, i1, s - i0};
  }
  return t;
}

}  // namespace

RawImage resize(const RawImage& img, int width, int height) {
  if (width < 1 || height < 1) throw ContractError("resize target must be >= 1x1");
  if (!img.valid()) throw ContractError("resize: invalid source image");
  if (width == img.width && height == img.height) return img;

  const auto tx = taps(img.width, width);
  const auto ty = taps(img.height, height);
  RawImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const Tap& vy = ty[y];
    for (int x = 0; x < width; ++x) {
      const Tap& vx = tx[x];
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(vx.i0, vy.i0, c) * (1.0 - vx.w1) + img.at(vx.i1, vy.i0, c) * vx.w1;
        const double bot = img.at(vx.i0, vy.i1, c) * (1.0 - vx.w1) + img.at(vx.i1, vy.i1, c) * vx.w1;
        const double v = top * (1.0 - vy.w1) + bot * vy.w1;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

}  // namespace mcfuse::imageio
