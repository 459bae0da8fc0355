#include <algorithm>
#include <cmath>
#include <fstream>

#include <spdlog/fmt/fmt.h>

#include "mcfuse/error.hpp"
#include "mcfuse/explain.hpp"

namespace mcfuse::explain {

void validate(const RegionMarking& r) {
  if (r.frame_width < 1 || r.frame_height < 1) throw ContractError("region marking has no frame size");
  for (const auto& b : r.boxes)
    if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > r.frame_width || b.y + b.h > r.frame_height)
      throw ContractError(fmt::format("box ({},{},{},{}) outside {}x{} frame", b.x, b.y, b.w, b.h, r.frame_width,
                                      r.frame_height));
}

RegionMarking scale_marking(const RegionMarking& r, int width, int height) {
  validate(r);
  if (width < 1 || height < 1) throw ContractError("scale_marking: bad target size");
  RegionMarking out = r;
  out.frame_width = width;
  out.frame_height = height;
  const double sx = static_cast<double>(width) / r.frame_width, sy = static_cast<double>(height) / r.frame_height;
  for (auto& b : out.boxes) {
    const int x0 = static_cast<int>(std::floor(b.x * sx)), y0 = static_cast<int>(std::floor(b.y * sy));
    const int x1 = std::min(width, static_cast<int>(std::ceil((b.x + b.w) * sx)));
    const int y1 = std::min(height, static_cast<int>(std::ceil((b.y + b.h) * sy)));
    b = {x0, y0, std::max(x1 - x0, 1), std::max(y1 - y0, 1)};
  }
  return out;
}

Agreement marking_agreement(const Heatmap& h, const RegionMarking& marking) {
  const RegionMarking r = (marking.frame_width == h.width && marking.frame_height == h.height)
                              ? marking
                              : scale_marking(marking, h.width, h.height);
  validate(r);
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(h.width) * h.height, 0);
  for (const auto& b : r.boxes)
    for (int y = b.y; y < b.y + b.h; ++y)
      std::fill_n(inside.begin() + static_cast<std::ptrdiff_t>(y) * h.width + b.x, b.w, 1);

  Agreement a;
  double total = 0, in = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    total += h.values[i];
    if (inside[i]) in += h.values[i];
    if (h.values[i] > h.values[best]) best = i;
  }
  if (!(total > 0)) {
    a.zero_heatmap = true;
    return a;
  }
  a.energy_fraction = std::clamp(in / total, 0.0, 1.0);
  a.pointing_hit = inside[best] != 0;
  return a;
}

void write_agreement_csv(const std::vector<AgreementRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "image_id,class,energy_fraction,pointing_hit\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{:.6f},{}\n", r.image_id, label_name(r.label), r.agreement.energy_fraction,
                       r.agreement.pointing_hit ? 1 : 0);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

}  // namespace mcfuse::explain
