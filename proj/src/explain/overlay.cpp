#include <algorithm>
#include <cmath>

#include "mcfuse/error.hpp"
#include "mcfuse/explain.hpp"

namespace mcfuse::explain {

namespace detail {
std::vector<double> upsample(const std::vector<double>& src, int sw, int sh, int dw, int dh);
}

std::array<std::uint8_t, 3> jet(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto ramp = [&](double centre) {
    const double v = std::clamp(1.5 - std::abs(4.0 * t - centre), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
  };
  return {ramp(3.0), ramp(2.0), ramp(1.0)};
}

imageio::RawImage overlay(const Heatmap& h, const imageio::RawImage& img) {
  if (!img.valid()) throw ContractError("overlay: invalid image");
  if (h.values.size() != static_cast<std::size_t>(h.width) * h.height) throw ContractError("overlay: bad heatmap");
  std::vector<double> v(h.values.begin(), h.values.end());
  if (h.width != img.width || h.height != img.height) v = detail::upsample(v, h.width, h.height, img.width, img.height);
  imageio::RawImage out(img.width, img.height);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto c = jet(v[i]);
    for (int k = 0; k < 3; ++k)
      out.pixels[3 * i + k] =
          static_cast<std::uint8_t>(std::floor(0.6 * img.pixels[3 * i + k] + 0.4 * c[k] + 0.5));
  }
  return out;
}

void save_heatmap_png(const Heatmap& h, const std::filesystem::path& path) {
  std::vector<std::uint8_t> g(h.values.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = static_cast<std::uint8_t>(std::floor(255.0 * std::clamp(h.values[i], 0.0f, 1.0f) + 0.5));
  imageio::save_png_gray(h.width, h.height, g, path);
}

}  // namespace mcfuse::explain
