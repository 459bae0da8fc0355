#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mcfuse/error.hpp"
#include "mcfuse/imageio.hpp"
#include "support.hpp"

using namespace mcfuse;
using namespace mcfuse::imageio;

namespace {

double psnr(const RawImage& a, const RawImage& b) {
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const double mse = se / a.pixels.size();
  return mse == 0 ? 99.0 : 10 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace

TEST_CASE("quality factor range") {
  CHECK_THROWS_AS(QualityFactor(0), ContractError);
  CHECK_THROWS_AS(QualityFactor(101), ContractError);
  CHECK(QualityFactor(1).value() == 1);
  CHECK(QualityFactor(100).value() == 100);
}

TEST_CASE("quality sweep is 100 down to 10 in steps of 10") {
  const auto q = quality_sweep();
  REQUIRE(q.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(q[i].value() == 100 - 10 * i);
}

TEST_CASE("png round trip is lossless") {
  Rng rng(1);
  const RawImage img = test::random_image(rng, 37, 23);
  test::TempDir dir("png");
  save_png(img, dir / "a.png");
  CHECK(load_image(dir / "a.png") == img);
  CHECK(decode_image(encode_png(img)) == img);
  const auto info = probe_image(dir / "a.png");
  CHECK(info.width == 37);
  CHECK(info.height == 23);
}

TEST_CASE("gray png expands to three equal channels") {
  test::TempDir dir("gray");
  std::vector<std::uint8_t> g = {0, 50, 100, 150, 200, 250};
  save_png_gray(3, 2, g, dir / "g.png");
  const RawImage img = load_image(dir / "g.png");
  REQUIRE(img.width == 3);
  REQUIRE(img.height == 2);
  for (int i = 0; i < 6; ++i)
    for (int c = 0; c < 3; ++c) CHECK(img.pixels[3 * i + c] == g[i]);
}

TEST_CASE("jpeg recompression preserves size and degrades with quality") {
  Rng rng(2);
  const RawImage img = test::smooth_image(rng, 64, 48);
  double prev = 1e9;
  for (auto qf : quality_sweep()) {
    const RawImage r = jpeg_recompress(img, qf);
    CHECK(r.width == 64);
    CHECK(r.height == 48);
    const double p = psnr(img, r);
    CHECK(p <= prev + 1.0);  // monotone up to small codec noise
    prev = p;
  }
  CHECK(psnr(img, jpeg_recompress(img, QualityFactor(100))) > 40);
  CHECK(psnr(img, jpeg_recompress(img, QualityFactor(10))) < psnr(img, jpeg_recompress(img, QualityFactor(90))));
}

TEST_CASE("jpeg encoding is deterministic") {
  Rng rng(3);
  const RawImage img = test::random_image(rng, 31, 17);
  CHECK(encode_jpeg(img, QualityFactor(75)) == encode_jpeg(img, QualityFactor(75)));
}

TEST_CASE("decode errors") {
  test::TempDir dir("bad");
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
  {
    std::ofstream(dir / "junk.jpg") << "not an image at all";
  }
  CHECK_THROWS_AS(load_image(dir / "junk.jpg"), DecodeError);
  Rng rng(4);
  auto bytes = encode_jpeg(test::random_image(rng, 16, 16), QualityFactor(80));
  bytes.resize(bytes.size() / 3);
  CHECK_THROWS_AS(decode_image(bytes), DecodeError);
}

TEST_CASE("resize") {
  SUBCASE("same size is identity") {
    Rng rng(5);
    const RawImage img = test::random_image(rng, 20, 10);
    CHECK(resize(img, 20, 10) == img);
  }
  SUBCASE("constant image stays constant") {
    const RawImage img = RawImage::filled(13, 7, 10, 200, 77);
    const RawImage r = resize(img, 224, 224);
    CHECK(r == RawImage::filled(224, 224, 10, 200, 77));
  }
  SUBCASE("2x downscale of 2x2 blocks averages with half-pixel centres") {
    RawImage img(4, 2);
    const std::uint8_t vals[] = {0, 100, 50, 51, 10, 20, 40, 41};  // row-major, channel 0
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 4; ++x) img.at(x, y, 0) = vals[y * 4 + x];
    const RawImage r = resize(img, 2, 1);
    // sample points (0.5, 0.5) and (2.5, 0.5): mean of each 2x2 block, rounded half up
    CHECK(r.at(0, 0, 0) == 33);  // (0+100+10+20)/4 = 32.5
    CHECK(r.at(1, 0, 0) == 46);  // (50+51+40+41)/4 = 45.5
  }
  CHECK_THROWS_AS(resize(RawImage(4, 4), 0, 3), ContractError);
}

TEST_CASE("bundled corpus images decode") {
  const auto dir = test::data_dir() / "corpus";
  int n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.path().extension() == ".jpg" && n < 12) {
      const RawImage img = load_image(e.path());
      CHECK(img.valid());
      ++n;
    }
  CHECK(n == 12);
}
