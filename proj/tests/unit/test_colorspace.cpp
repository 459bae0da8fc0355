#include <doctest.h>

#include <cmath>
#include <map>

#include "mcfuse/colorspace.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/util/csv.hpp"
#include "support.hpp"

using namespace mcfuse;

TEST_CASE("colorspace names") {
  for (auto id : kAllColorspaces) {
    const auto name = std::string(to_string(id));
    CHECK(parse_colorspace(name) == id);
    std::string lower = name;
    for (auto& c : lower) c = static_cast<char>(std::tolower(c));
    CHECK(parse_colorspace(lower) == id);
  }
  CHECK_FALSE(parse_colorspace("CMYK"));
}

TEST_CASE("golden vectors match the reference formulas") {
  const csv::Table t = csv::read(test::data_dir() / "colorspace_golden.csv");
  REQUIRE(t.rows.size() == 550);
  const std::size_t cr = t.column("rgb_r"), cg = t.column("rgb_g"), cb = t.column("rgb_b"), cs = t.column("space");
  const std::size_t c1 = t.column("c1");
  std::map<std::string, double> worst;
  for (const auto& row : t.rows) {
    const auto id = parse_colorspace(row[cs]);
    REQUIRE(id);
    const std::array<double, 3> rgb = {std::stod(row[cr]), std::stod(row[cg]), std::stod(row[cb])};
    const auto got = convert_pixel(rgb, *id);
    for (int k = 0; k < 3; ++k) {
      const double want = std::stod(row[c1 + k]);
      double err = std::abs(got[k] - want);
      // hue is circular: 0 and 2pi (or 360) are the same angle
      if ((*id == ColorspaceId::LCH && k == 2)) err = std::min(err, std::abs(err - 2 * M_PI));
      if ((*id == ColorspaceId::HSV || *id == ColorspaceId::HLS) && k == 0) err = std::min(err, std::abs(err - 360));
      worst[row[cs]] = std::max(worst[row[cs]], err);
      CHECK_MESSAGE(err <= 1e-4, row[cs] << " rgb " << row[cr] << "," << row[cg] << "," << row[cb] << " ch " << k
                                         << " got " << got[k] << " want " << want);
    }
  }
  for (auto& [name, e] : worst) MESSAGE(name << " max abs err " << e);
}

TEST_CASE("pinned anchor values") {
  const auto lab = convert_pixel({255, 0, 0}, ColorspaceId::LAB);
  CHECK(lab[0] == doctest::Approx(53.2408).epsilon(1e-5));
  CHECK(lab[1] == doctest::Approx(80.0925).epsilon(1e-5));
  CHECK(lab[2] == doctest::Approx(67.2032).epsilon(1e-5));
  const auto white = convert_pixel({255, 255, 255}, ColorspaceId::LAB);
  CHECK(white[0] == doctest::Approx(100).epsilon(1e-9));
  CHECK(white[1] == 0.0);
  CHECK(white[2] == 0.0);
  const auto grey = convert_pixel({77, 77, 77}, ColorspaceId::LCH);
  CHECK(grey[1] == 0.0);
  const auto ycc = convert_pixel({0, 0, 0}, ColorspaceId::YCbCr);
  CHECK(ycc[1] == doctest::Approx(128));
  CHECK(ycc[2] == doctest::Approx(128));
  const auto hsv = convert_pixel({0, 255, 0}, ColorspaceId::HSV);
  CHECK(hsv[0] == doctest::Approx(120));
}

TEST_CASE("pixel round trip on 10^4 random colours") {
  Rng rng(42);
  for (auto id : kAllColorspaces) {
    CAPTURE(to_string(id));
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const std::array<double, 3> rgb = {double(rng.below(256)), double(rng.below(256)), double(rng.below(256))};
      const auto back = invert_pixel(convert_pixel(rgb, id), id);
      for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(back[k] - rgb[k]));
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("tensor round trip within one 8-bit level") {
  Rng rng(43);
  const imageio::RawImage img = test::random_image(rng, 100, 100);  // 10^4 pixels
  const ImageTensor rgb = to_tensor(img);
  for (auto id : kAllColorspaces) {
    CAPTURE(to_string(id));
    const ImageTensor t = transform(rgb, id);
    CHECK(t.space == id);
    CHECK(t.range == RangeTag::native);
    const ImageTensor back = inverse_transform(t);
    double worst = 0;
    for (std::size_t i = 0; i < back.data.size(); ++i)
      worst = std::max(worst, double(std::abs(back.data[i] - rgb.data[i])));
    CHECK(worst <= 1.0);  // 1/255 of full scale
    CHECK(to_raw(back) == img);
  }
}

TEST_CASE("transform contracts") {
  const ImageTensor rgb = to_tensor(imageio::RawImage::filled(4, 4, 1, 2, 3));
  const ImageTensor lab = transform(rgb, ColorspaceId::LAB);
  CHECK_THROWS_AS(transform(lab, ColorspaceId::HSV), ContractError);
  CHECK_THROWS_AS(inverse_transform(rescale_0_255(lab)), ContractError);
  CHECK(transform(rgb, ColorspaceId::RGB) == rgb);
}

TEST_CASE("rescale properties on 1000 random images in all spaces") {
  Rng rng(7);
  int degenerate = 0;
  for (int n = 0; n < 1000; ++n) {
    const int w = 3 + static_cast<int>(rng.below(14)), h = 3 + static_cast<int>(rng.below(14));
    imageio::RawImage img = n % 10 == 0 ? test::smooth_image(rng, w, h) : test::random_image(rng, w, h);
    if (n % 97 == 0) img = imageio::RawImage::filled(w, h, 9, 9, 9);  // flat: degenerate channels
    const ColorspaceId id = kAllColorspaces[n % kAllColorspaces.size()];
    CAPTURE(n);
    CAPTURE(to_string(id));
    const ImageTensor t = transform(to_tensor(img), id);
    const ImageTensor r = rescale_0_255(t);
    REQUIRE(r.range == RangeTag::rescaled_0_255);
    REQUIRE(r.space == id);
    for (int c = 0; c < 3; ++c) {
      const float* in = t.channel(c);
      const float* out = r.channel(c);
      const std::size_t m = t.plane_size();
      float lo = in[0], hi = in[0];
      for (std::size_t i = 0; i < m; ++i) lo = std::min(lo, in[i]), hi = std::max(hi, in[i]);
      float olo = 255, ohi = 0;
      for (std::size_t i = 0; i < m; ++i) {
        REQUIRE(out[i] == std::floor(out[i]));
        REQUIRE(out[i] >= 0);
        REQUIRE(out[i] <= 255);
        olo = std::min(olo, out[i]), ohi = std::max(ohi, out[i]);
      }
      if (hi > lo) {
        CHECK(olo == 0);
        CHECK(ohi == 255);
      } else {
        ++degenerate;
        CHECK(ohi == 0);
      }
      // order preservation: sort by input, outputs must be non-decreasing
      std::vector<std::size_t> idx(m);
      for (std::size_t i = 0; i < m; ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return in[a] < in[b]; });
      for (std::size_t i = 1; i < m; ++i) REQUIRE(out[idx[i - 1]] <= out[idx[i]]);
    }
    // affine invariance: exact for power-of-two scales, within one level otherwise
    ImageTensor scaled = t, affine = t;
    for (auto& v : scaled.data) v *= 4.0f;
    for (auto& v : affine.data) v = 3.7f * v - 12.5f;
    CHECK(rescale_0_255(scaled) == r);
    const ImageTensor ra = rescale_0_255(affine);
    for (std::size_t i = 0; i < r.data.size(); ++i) REQUIRE(std::abs(ra.data[i] - r.data[i]) <= 1.0f);
  }
  CHECK(degenerate > 0);
}

TEST_CASE("rescale rounding is half up") {
  ImageTensor t(3, 1, ColorspaceId::LAB);
  // channel 0: 0, 0.5/255 of range above... use range 510 so x=1 lands on 0.5
  t.at(0, 0, 0) = 0;
  t.at(0, 0, 1) = 1;
  t.at(0, 0, 2) = 510;
  const ImageTensor r = rescale_0_255(t);
  CHECK(r.at(0, 0, 0) == 0);
  CHECK(r.at(0, 0, 1) == 1);  // 0.5 rounds up
  CHECK(r.at(0, 0, 2) == 255);
}
