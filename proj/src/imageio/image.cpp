#include <string>

#include "mcfuse/error.hpp"
#include "mcfuse/imageio.hpp"

namespace mcfuse::imageio {

RawImage::RawImage(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw ContractError("image dimensions must be >= 1");
  pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

RawImage RawImage::filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RawImage img(w, h);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  return img;
}

bool RawImage::valid() const {
  return width >= 1 && height >= 1 &&
         pixels.size() == static_cast<std::size_t>(width) * height * 3;
}

QualityFactor::QualityFactor(int value) : value_(value) {
  if (value < 1 || value > 100)
    throw ContractError("quality factor must be in [1,100], got " + std::to_string(value));
}

std::vector<QualityFactor> quality_sweep() {
  std::vector<QualityFactor> qfs;
  for (int q = 100; q >= 10; q -= 10) qfs.emplace_back(q);
  return qfs;
}

RawImage jpeg_recompress(const RawImage& img, QualityFactor qf) {
  const auto bytes = encode_jpeg(img, qf);
  RawImage out = decode_image(bytes);
  if (out.width != img.width || out.height != img.height)
    throw RecompressionError("jpeg round trip changed image dimensions");
  return out;
}

}  // namespace mcfuse::imageio
