#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "mcfuse/colorspace.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/simd/kernels.hpp"

namespace mcfuse {
namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

constexpr Mat3 kRgbToXyz = {0.4124564, 0.3575761, 0.1804375,
                            0.2126729, 0.7151522, 0.0721750,
                            0.0193339, 0.1191920, 0.9503041};

struct Linear {
  Mat3 m;
  Vec3 offset;
  double scale;  // applied to RGB before the matrix
};

constexpr Linear kYuv = {{0.299, 0.587, 0.114,
                          -0.14714119, -0.28886916, 0.43601035,
                          0.61497538, -0.51496512, -0.10001026},
                         {0, 0, 0}, 1.0 / 255};
constexpr Linear kYiq = {{0.299, 0.587, 0.114,
                          0.59590059, -0.27455667, -0.32134392,
                          0.21153661, -0.52273617, 0.31119955},
                         {0, 0, 0}, 1.0 / 255};
constexpr Linear kYpbpr = {{0.299, 0.587, 0.114,
                            -0.168736, -0.331264, 0.5,
                            0.5, -0.418688, -0.081312},
                           {0, 0, 0}, 1.0 / 255};
constexpr Linear kYdbdr = {{0.299, 0.587, 0.114,
                            -0.45, -0.883, 1.333,
                            -1.333, 1.116, 0.217},
                           {0, 0, 0}, 1.0 / 255};
constexpr Linear kYcbcr = {{0.299, 0.587, 0.114,
                            -0.168736, -0.331264, 0.5,
                            0.5, -0.418688, -0.081312},
                           {0, 128, 128}, 1.0};

const Linear* linear_for(ColorspaceId id) {
  switch (id) {
    case ColorspaceId::YUV: return &kYuv;
    case ColorspaceId::YIQ: return &kYiq;
    case ColorspaceId::YPbPr: return &kYpbpr;
    case ColorspaceId::YDbDr: return &kYdbdr;
    case ColorspaceId::YCbCr: return &kYcbcr;
    default: return nullptr;
  }
}

Mat3 inverse(const Mat3& m) {
  const double c00 = m[4] * m[8] - m[5] * m[7];
  const double c01 = m[5] * m[6] - m[3] * m[8];
  const double c02 = m[3] * m[7] - m[4] * m[6];
  const double det = m[0] * c00 + m[1] * c01 + m[2] * c02;
  const double k = 1.0 / det;
  return {c00 * k, (m[2] * m[7] - m[1] * m[8]) * k, (m[1] * m[5] - m[2] * m[4]) * k,
          c01 * k, (m[0] * m[8] - m[2] * m[6]) * k, (m[2] * m[3] - m[0] * m[5]) * k,
          c02 * k, (m[1] * m[6] - m[0] * m[7]) * k, (m[0] * m[4] - m[1] * m[3]) * k};
}

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
          m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

const Vec3 kWhite = {kRgbToXyz[0] + kRgbToXyz[1] + kRgbToXyz[2],
                     kRgbToXyz[3] + kRgbToXyz[4] + kRgbToXyz[5],
                     kRgbToXyz[6] + kRgbToXyz[7] + kRgbToXyz[8]};

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

constexpr double kDelta = 6.0 / 29.0;

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_finv(double f) {
  return f > kDelta ? f * f * f : 3 * kDelta * kDelta * (f - 4.0 / 29.0);
}

Vec3 rgb_to_xyz(const Vec3& rgb) {
  return mul(kRgbToXyz, {srgb_to_linear(rgb[0] / 255), srgb_to_linear(rgb[1] / 255),
                         srgb_to_linear(rgb[2] / 255)});
}

Vec3 xyz_to_rgb(const Vec3& xyz) {
  static const Mat3 inv = inverse(kRgbToXyz);
  const Vec3 lin = mul(inv, xyz);
  return {linear_to_srgb(lin[0]) * 255, linear_to_srgb(lin[1]) * 255, linear_to_srgb(lin[2]) * 255};
}

Vec3 rgb_to_lab(const Vec3& rgb) {
  const Vec3 xyz = rgb_to_xyz(rgb);
  const double fy = lab_f(xyz[1] / kWhite[1]);
  if (rgb[0] == rgb[1] && rgb[1] == rgb[2]) return {116 * fy - 16, 0.0, 0.0};
  const double fx = lab_f(xyz[0] / kWhite[0]);
  const double fz = lab_f(xyz[2] / kWhite[2]);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

Vec3 lab_to_rgb(const Vec3& lab) {
  const double fy = (lab[0] + 16) / 116;
  const double fx = fy + lab[1] / 500;
  const double fz = fy - lab[2] / 200;
  return xyz_to_rgb({kWhite[0] * lab_finv(fx), kWhite[1] * lab_finv(fy), kWhite[2] * lab_finv(fz)});
}

// Hue in degrees [0,360) for the hexcone models; 0 when achromatic.
double hexcone_hue(double r, double g, double b, double mx, double d) {
  if (d == 0) return 0.0;
  double h;
  if (mx == r) {
    h = std::fmod((g - b) / d, 6.0);
    if (h < 0) h += 6.0;
  } else if (mx == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  h *= 60.0;
  return h >= 360.0 ? h - 360.0 : h;
}

// RGB in [0,1] from hue (degrees), chroma and the common offset m.
Vec3 hue_chroma(double h, double c, double m) {
  const double hp = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return {(r + m) * 255, (g + m) * 255, (b + m) * 255};
}

}  // namespace

std::string_view to_string(ColorspaceId id) {
  switch (id) {
    case ColorspaceId::RGB: return "RGB";
    case ColorspaceId::HLS: return "HLS";
    case ColorspaceId::HSV: return "HSV";
    case ColorspaceId::LAB: return "LAB";
    case ColorspaceId::LCH: return "LCH";
    case ColorspaceId::XYZ: return "XYZ";
    case ColorspaceId::YCbCr: return "YCbCr";
    case ColorspaceId::YDbDr: return "YDbDr";
    case ColorspaceId::YIQ: return "YIQ";
    case ColorspaceId::YPbPr: return "YPbPr";
    case ColorspaceId::YUV: return "YUV";
  }
  return "?";
}

std::optional<ColorspaceId> parse_colorspace(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  const std::string key = lower(name);
  for (ColorspaceId id : kAllColorspaces)
    if (lower(to_string(id)) == key) return id;
  return std::nullopt;
}

ImageTensor::ImageTensor(int w, int h, ColorspaceId s, RangeTag r)
    : width(w), height(h), space(s), range(r) {
  if (w < 1 || h < 1) throw ContractError("tensor dimensions must be >= 1");
  data.assign(plane_size() * 3, 0.0f);
}

ImageTensor to_tensor(const imageio::RawImage& img) {
  if (!img.valid()) throw ContractError("to_tensor: invalid image");
  ImageTensor t(img.width, img.height, ColorspaceId::RGB);
  const std::size_t n = t.plane_size();
  float* r = t.channel(0);
  float* g = t.channel(1);
  float* b = t.channel(2);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = img.pixels[i * 3];
    g[i] = img.pixels[i * 3 + 1];
    b[i] = img.pixels[i * 3 + 2];
  }
  return t;
}

imageio::RawImage to_raw(const ImageTensor& rgb) {
  if (rgb.space != ColorspaceId::RGB) throw ContractError("to_raw: tensor is not RGB");
  imageio::RawImage img(rgb.width, rgb.height);
  const std::size_t n = rgb.plane_size();
  for (int c = 0; c < 3; ++c) {
    const float* src = rgb.channel(c);
    for (std::size_t i = 0; i < n; ++i)
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::floor(src[i] + 0.5f), 0.0f, 255.0f));
  }
  return img;
}

std::array<double, 3> convert_pixel(std::array<double, 3> rgb, ColorspaceId target) {
  if (const Linear* lin = linear_for(target)) {
    Vec3 v = mul(lin->m, {rgb[0] * lin->scale, rgb[1] * lin->scale, rgb[2] * lin->scale});
    return {v[0] + lin->offset[0], v[1] + lin->offset[1], v[2] + lin->offset[2]};
  }
  switch (target) {
    case ColorspaceId::RGB:
      return rgb;
    case ColorspaceId::XYZ:
      return rgb_to_xyz(rgb);
    case ColorspaceId::LAB:
      return rgb_to_lab(rgb);
    case ColorspaceId::LCH: {
      const Vec3 lab = rgb_to_lab(rgb);
      double h = std::atan2(lab[2], lab[1]);
      if (h < 0) h += 2 * std::numbers::pi;
      return {lab[0], std::hypot(lab[1], lab[2]), h};
    }
    case ColorspaceId::HSV: {
      const double r = rgb[0] / 255, g = rgb[1] / 255, b = rgb[2] / 255;
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double d = mx - mn;
      return {hexcone_hue(r, g, b, mx, d), mx == 0 ? 0.0 : d / mx, mx};
    }
    case ColorspaceId::HLS: {
      const double r = rgb[0] / 255, g = rgb[1] / 255, b = rgb[2] / 255;
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      const double d = mx - mn;
      const double l = (mx + mn) / 2;
      if (d == 0) return {0.0, l, 0.0};
      const double s = l <= 0.5 ? d / (mx + mn) : d / (2.0 - mx - mn);
      return {hexcone_hue(r, g, b, mx, d), l, s};
    }
    default:
      break;
  }
  throw ContractError("convert_pixel: unknown colorspace");
}

std::array<double, 3> invert_pixel(std::array<double, 3> v, ColorspaceId source) {
  if (const Linear* lin = linear_for(source)) {
    static const Mat3 inv_yuv = inverse(kYuv.m), inv_yiq = inverse(kYiq.m),
                      inv_ypbpr = inverse(kYpbpr.m), inv_ydbdr = inverse(kYdbdr.m);
    const Mat3& inv = lin == &kYuv     ? inv_yuv
                      : lin == &kYiq   ? inv_yiq
                      : lin == &kYdbdr ? inv_ydbdr
                                       : inv_ypbpr;  // YPbPr and YCbCr share a matrix
    const Vec3 rgb = mul(inv, {v[0] - lin->offset[0], v[1] - lin->offset[1], v[2] - lin->offset[2]});
    return {rgb[0] / lin->scale, rgb[1] / lin->scale, rgb[2] / lin->scale};
  }
  switch (source) {
    case ColorspaceId::RGB:
      return v;
    case ColorspaceId::XYZ:
      return xyz_to_rgb(v);
    case ColorspaceId::LAB:
      return lab_to_rgb(v);
    case ColorspaceId::LCH:
      return lab_to_rgb({v[0], v[1] * std::cos(v[2]), v[1] * std::sin(v[2])});
    case ColorspaceId::HSV: {
      const double c = v[2] * v[1];
      return hue_chroma(v[0], c, v[2] - c);
    }
    case ColorspaceId::HLS: {
      const double c = (1.0 - std::fabs(2.0 * v[1] - 1.0)) * v[2];
      return hue_chroma(v[0], c, v[1] - c / 2);
    }
    default:
      break;
  }
  throw ContractError("invert_pixel: unknown colorspace");
}

ImageTensor transform(const ImageTensor& img, ColorspaceId target) {
  if (img.space != ColorspaceId::RGB) throw ContractError("transform: input must be RGB");
  if (target == ColorspaceId::RGB) return img;
  ImageTensor out(img.width, img.height, target, RangeTag::native);
  const std::size_t n = img.plane_size();
  if (const Linear* lin = linear_for(target)) {
    simd::active().mat3_f32(n, lin->m.data(), lin->offset.data(), lin->scale, img.channel(0),
                            img.channel(1), img.channel(2), out.channel(0), out.channel(1),
                            out.channel(2));
    return out;
  }
  const float* r = img.channel(0);
  const float* g = img.channel(1);
  const float* b = img.channel(2);
  float* o0 = out.channel(0);
  float* o1 = out.channel(1);
  float* o2 = out.channel(2);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 v = convert_pixel({r[i], g[i], b[i]}, target);
    o0[i] = static_cast<float>(v[0]);
    o1[i] = static_cast<float>(v[1]);
    o2[i] = static_cast<float>(v[2]);
  }
  return out;
}

ImageTensor inverse_transform(const ImageTensor& img) {
  if (img.range != RangeTag::native) throw ContractError("inverse_transform: tensor was rescaled");
  ImageTensor out(img.width, img.height, ColorspaceId::RGB, RangeTag::native);
  const std::size_t n = img.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 v = invert_pixel({img.channel(0)[i], img.channel(1)[i], img.channel(2)[i]}, img.space);
    for (int c = 0; c < 3; ++c) out.channel(c)[i] = static_cast<float>(std::clamp(v[c], 0.0, 255.0));
  }
  return out;
}

}  // namespace mcfuse
