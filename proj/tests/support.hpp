#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <filesystem>
#include <string>

#include "mcfuse/imageio.hpp"
#include "mcfuse/util/rng.hpp"

namespace mcfuse::test {

inline std::filesystem::path data_dir() { return MCFUSE_TEST_DATA_DIR; }
inline std::filesystem::path corpus_manifest() { return data_dir() / "corpus" / "manifest.csv"; }
/// Empty when no backbone export is available.
inline std::filesystem::path model_path() { return MCFUSE_TEST_MODEL; }
inline std::filesystem::path model_reference() { return MCFUSE_TEST_MODEL_REF; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() / ("mcfuse-" + tag + "-" + std::to_string(rng.next() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline imageio::RawImage random_image(Rng& rng, int w, int h) {
  imageio::RawImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

/// Smooth gradient with mild noise, closer to photo statistics than white noise.
inline imageio::RawImage smooth_image(Rng& rng, int w, int h) {
  imageio::RawImage img(w, h);
  const double a = rng.uniform() * 6.28, b = rng.uniform() * 6.28;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = 128 + 90 * std::sin(0.05 * x + a + c) * std::cos(0.04 * y + b - c) + 10 * (rng.uniform() - 0.5);
        img.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

}  // namespace mcfuse::test
