#pragma once

// Decoding, resizing and JPEG recompression of 8-bit RGB images.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mcfuse::imageio {

/// 8-bit sRGB image, 3 interleaved channels, row-major.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(int w, int h);  // zero-filled

  static RawImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  /// width, height >= 1 and buffer length == width*height*3.
  bool valid() const;

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

/// JPEG quality factor in [1, 100].
class QualityFactor {
 public:
  explicit QualityFactor(int value);
  int value() const { return value_; }
  friend auto operator<=>(const QualityFactor&, const QualityFactor&) = default;

 private:
  int value_;
};

/// Quality factors of the robustness sweep: 100, 90, ..., 10.
std::vector<QualityFactor> quality_sweep();

struct ImageInfo {
  int width = 0;
  int height = 0;
};

/// PNG or JPEG (detected from the signature). Grayscale is expanded to three
/// equal channels and alpha is dropped.
/// Throws IoError when the file can't be read, DecodeError for anything else.
RawImage load_image(const std::filesystem::path& path);
RawImage decode_image(std::span<const std::uint8_t> bytes);

/// Dimensions from the file header without decoding pixel data.
ImageInfo probe_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const RawImage& img);
void save_png(const RawImage& img, const std::filesystem::path& path);
/// Single-channel 8-bit PNG.
void save_png_gray(int width, int height, std::span<const std::uint8_t> values,
                   const std::filesystem::path& path);

/// Baseline JPEG, islow DCT, optimized Huffman tables. Chroma is 4:2:0 below
/// quality 95 and 4:4:4 from 95 up.
std::vector<std::uint8_t> encode_jpeg(const RawImage& img, QualityFactor qf);
void save_jpeg(const RawImage& img, QualityFactor qf, const std::filesystem::path& path);

/// Encode at `qf` and decode back. Dimensions are preserved.
RawImage jpeg_recompress(const RawImage& img, QualityFactor qf);

/// Bilinear resampling with half-pixel centres (no antialias prefilter),
/// rounded to nearest. Same-size resize returns the input unchanged.
RawImage resize(const RawImage& img, int width, int height);

}  // namespace mcfuse::imageio
