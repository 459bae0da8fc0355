#pragma once

// Colorspace transforms and per-channel min-max rescaling.
//
// Native units:
//   RGB    0..255
//   HSV    H degrees [0,360), S, V in [0,1]
//   HLS    H degrees [0,360), L, S in [0,1]
//   XYZ    sRGB companding, D65, Y(white) = 1
//   LAB    CIE 1976, white = row sums of the sRGB->XYZ matrix
//   LCH    cylindrical LAB: L, C = hypot(a,b), H = atan2(b,a) in radians [0,2pi)
//   YCbCr  BT.601 full range on 0..255, chroma offset 128
//   YUV, YIQ, YDbDr, YPbPr  analog matrices applied to RGB/255
// Achromatic inputs (r == g == b) give exactly zero a, b, C, S.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mcfuse/imageio.hpp"

namespace mcfuse {

enum class ColorspaceId : std::uint8_t {
  RGB = 0, HLS, HSV, LAB, LCH, XYZ, YCbCr, YDbDr, YIQ, YPbPr, YUV
};

inline constexpr std::array<ColorspaceId, 11> kAllColorspaces = {
    ColorspaceId::RGB,   ColorspaceId::HLS,   ColorspaceId::HSV, ColorspaceId::LAB,
    ColorspaceId::LCH,   ColorspaceId::XYZ,   ColorspaceId::YCbCr, ColorspaceId::YDbDr,
    ColorspaceId::YIQ,   ColorspaceId::YPbPr, ColorspaceId::YUV};

std::string_view to_string(ColorspaceId id);
/// Case-insensitive name lookup.
std::optional<ColorspaceId> parse_colorspace(std::string_view name);

enum class RangeTag : std::uint8_t { native, rescaled_0_255 };

/// Planar float image: data holds channel 0, then 1, then 2, each row-major.
struct ImageTensor {
  int width = 0;
  int height = 0;
  ColorspaceId space = ColorspaceId::RGB;
  RangeTag range = RangeTag::native;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int w, int h, ColorspaceId s, RangeTag r = RangeTag::native);

  std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
  float* channel(int c) { return data.data() + c * plane_size(); }
  const float* channel(int c) const { return data.data() + c * plane_size(); }
  float& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// RGB tensor holding the raw 0..255 samples.
ImageTensor to_tensor(const imageio::RawImage& img);
/// RGB tensor back to 8 bits (rounded, clamped).
imageio::RawImage to_raw(const ImageTensor& rgb);

/// Per-pixel conversions in double. RGB components are on the 0..255 scale.
std::array<double, 3> convert_pixel(std::array<double, 3> rgb, ColorspaceId target);
/// Inverse of convert_pixel; the result is not clamped.
std::array<double, 3> invert_pixel(std::array<double, 3> value, ColorspaceId source);

/// RGB tensor to `target` in native units. Throws ContractError unless
/// img.space == RGB. target == RGB returns a copy.
ImageTensor transform(const ImageTensor& img, ColorspaceId target);

/// Native-range tensor back to RGB, clamped to [0,255].
ImageTensor inverse_transform(const ImageTensor& img);

/// Per-channel, per-image min-max rescale: round((x - min) / (max - min) * 255),
/// half rounded up. A constant channel maps to 0.
ImageTensor rescale_0_255(const ImageTensor& img);

}  // namespace mcfuse
