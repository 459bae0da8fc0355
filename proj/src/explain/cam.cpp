#include <algorithm>
#include <cmath>

#include "mcfuse/error.hpp"
#include "mcfuse/explain.hpp"

namespace mcfuse::explain {

namespace detail {

// Bilinear resample with half-pixel centers and clamped edges.
std::vector<double> upsample(const std::vector<double>& src, int sw, int sh, int dw, int dh) {
  std::vector<double> out(static_cast<std::size_t>(dw) * dh);
  const double fx = static_cast<double>(sw) / dw, fy = static_cast<double>(sh) / dh;
  for (int y = 0; y < dh; ++y) {
    const double sy = std::clamp((y + 0.5) * fy - 0.5, 0.0, sh - 1.0);
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, sh - 1);
    const double ty = sy - y0;
    for (int x = 0; x < dw; ++x) {
      const double sx = std::clamp((x + 0.5) * fx - 0.5, 0.0, sw - 1.0);
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, sw - 1);
      const double tx = sx - x0;
      const double top = src[y0 * sw + x0] * (1 - tx) + src[y0 * sw + x1] * tx;
      const double bot = src[y1 * sw + x0] * (1 - tx) + src[y1 * sw + x1] * tx;
      out[static_cast<std::size_t>(y) * dw + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace detail

Heatmap cam(const HeadModel& head, std::span<const FeatureMapStack> maps, int label) {
  if (label < 0 || label >= kNumClasses) throw ContractError("cam: class out of range");
  if (maps.empty()) throw ContractError("cam: no feature maps");
  const int ch = maps[0].channels, mh = maps[0].height, mw = maps[0].width;
  if (ch <= 0 || mh <= 0 || mw <= 0) throw ContractError("cam: empty feature maps");
  for (const auto& s : maps)
    if (s.channels != ch || s.height != mh || s.width != mw ||
        s.data.size() != static_cast<std::size_t>(ch) * mh * mw)
      throw ContractError("cam: feature map stacks differ in shape");
  if (head.dim != static_cast<int>(maps.size()) * ch)
    throw ContractError("cam: head dimension " + std::to_string(head.dim) + " does not match " +
                        std::to_string(maps.size()) + " branch(es) of " + std::to_string(ch) + " channels");

  Heatmap h;
  h.label = label;
  h.map_width = mw;
  h.map_height = mh;
  const std::size_t plane = static_cast<std::size_t>(mh) * mw;
  h.raw_combined.assign(plane, 0.0);
  const float* w = head.row(label);
  for (std::size_t b = 0; b < maps.size(); ++b) {
    std::vector<double> raw(plane, 0.0);
    for (int k = 0; k < ch; ++k) {
      const double wk = w[b * ch + k];
      if (wk == 0) continue;
      const float* a = maps[b].map(k);
      for (std::size_t i = 0; i < plane; ++i) raw[i] += wk * a[i];
    }
    for (std::size_t i = 0; i < plane; ++i) h.raw_combined[i] += raw[i];
    h.branch_maps.push_back(std::move(raw));
  }

  std::vector<double> rect(plane);
  for (std::size_t i = 0; i < plane; ++i) rect[i] = std::max(h.raw_combined[i], 0.0);
  const auto up = detail::upsample(rect, mw, mh, h.width, h.height);
  const double peak = *std::max_element(up.begin(), up.end());
  h.values.assign(up.size(), 0.0f);
  h.all_zero = !(peak > 0);
  if (!h.all_zero)
    for (std::size_t i = 0; i < up.size(); ++i) h.values[i] = static_cast<float>(up[i] / peak);
  return h;
}

double cam_logit(const Heatmap& h, const HeadModel& head) {
  if (h.raw_combined.empty()) throw ContractError("cam_logit: heatmap has no raw map");
  double s = 0;
  for (double v : h.raw_combined) s += v;
  return s / static_cast<double>(h.raw_combined.size()) + head.bias[h.label];
}

}  // namespace mcfuse::explain
