#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mcfuse/error.hpp"
#include "mcfuse/preprocess.hpp"

namespace mcfuse {
namespace {

void check(const LoGConfig& cfg) {
  if (cfg.kernel_size < 3 || cfg.kernel_size % 2 == 0)
    throw ContractError("LoG kernel_size must be odd and >= 3");
  if (!(cfg.sigma > 0) || !std::isfinite(cfg.sigma)) throw ContractError("LoG sigma must be > 0");
}

// Reflect without repeating the edge sample: -1 -> 1, n -> n-2.
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

}  // namespace

std::vector<double> log_kernel(const LoGConfig& cfg) {
  check(cfg);
  const int k = cfg.kernel_size, r = k / 2;
  const double s2 = cfg.sigma * cfg.sigma;
  const double norm = -1.0 / (std::numbers::pi * s2 * s2);
  std::vector<double> w(static_cast<std::size_t>(k) * k);
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double q = (x * x + y * y) / (2.0 * s2);
      w[static_cast<std::size_t>(y + r) * k + (x + r)] = norm * (1.0 - q) * std::exp(-q);
    }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (double& v : w) v -= mean;
  return w;
}

namespace detail {

// Residual-added channel without clamping. The response is accumulated as
// sum_i k_i (x_i - x_centre), which equals the convolution for a zero-sum
// kernel and is exactly zero on flat regions.
void add_log_response(const float* in, float* out, int width, int height,
                      const std::vector<double>& kernel, int ksize) {
  const int r = ksize / 2;
  std::vector<int> xs(static_cast<std::size_t>(width) * ksize);
  for (int x = 0; x < width; ++x)
    for (int dx = -r; dx <= r; ++dx) xs[static_cast<std::size_t>(x) * ksize + dx + r] = reflect(x + dx, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double centre = in[static_cast<std::size_t>(y) * width + x];
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const float* row = in + static_cast<std::size_t>(reflect(y + dy, height)) * width;
        const double* kr = kernel.data() + static_cast<std::size_t>(dy + r) * ksize;
        const int* xi = xs.data() + static_cast<std::size_t>(x) * ksize;
        for (int j = 0; j < ksize; ++j) acc += kr[j] * (row[xi[j]] - centre);
      }
      out[static_cast<std::size_t>(y) * width + x] = static_cast<float>(centre + acc);
    }
  }
}

}  // namespace detail

ImageTensor log_residual(const ImageTensor& img, const LoGConfig& cfg) {
  if (img.range != RangeTag::rescaled_0_255 && img.space != ColorspaceId::RGB)
    throw ContractError("log_residual expects a rescaled tensor");
  const auto kernel = log_kernel(cfg);
  ImageTensor out = img;
  for (int c = 0; c < 3; ++c) {
    detail::add_log_response(img.channel(c), out.channel(c), img.width, img.height, kernel,
                             cfg.kernel_size);
    float* o = out.channel(c);
    for (std::size_t i = 0; i < out.plane_size(); ++i) o[i] = std::clamp(o[i], 0.0f, 255.0f);
  }
  return out;
}

}  // namespace mcfuse
