#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>

#include "mcfuse/backbone.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/preprocess.hpp"
#include "support.hpp"

using namespace mcfuse;

namespace {

// Same pattern the export script feeds torch: (37c + 3y + 5x) mod 256.
ImageTensor probe_pattern() {
  ImageTensor t(kInputSize, kInputSize, ColorspaceId::RGB);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kInputSize; ++y)
      for (int x = 0; x < kInputSize; ++x) t.at(c, y, x) = static_cast<float>((37 * c + 3 * y + 5 * x) % 256);
  return t;
}

std::vector<double> read_reference(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') v.push_back(std::stod(line));
  return v;
}

const Backbone& shared_backbone() {
  static const Backbone b = Backbone::load(test::model_path());
  return b;
}

bool have_model() {
  if (test::model_path().empty() || !std::filesystem::exists(test::model_path())) {
    MESSAGE("no backbone export configured; skipped");
    return false;
  }
  return true;
}

}  // namespace

TEST_CASE("interpreter matches the torch reference on the probe pattern") {
  if (!have_model() || test::model_reference().empty()) return;
  const auto ref = read_reference(test::model_reference());
  REQUIRE(ref.size() == 2 * kFeatureDim);
  const BackboneOutput out = shared_backbone().extract_maps(probe_pattern());
  REQUIRE(out.pooled.values.size() == kFeatureDim);
  REQUIRE(out.maps.channels == kFeatureDim);
  REQUIRE(out.maps.height == kMapSize);
  REQUIRE(out.maps.width == kMapSize);
  double worst_pooled = 0, worst_map = 0;
  for (int k = 0; k < kFeatureDim; ++k) {
    const double p = out.pooled.values[k], m = out.maps.map(k)[3 * kMapSize + 4];
    worst_pooled = std::max(worst_pooled, std::abs(p - ref[k]) / std::max(1.0, std::abs(ref[k])));
    worst_map = std::max(worst_map, std::abs(m - ref[kFeatureDim + k]) / std::max(1.0, std::abs(ref[kFeatureDim + k])));
  }
  MESSAGE("max rel error pooled " << worst_pooled << ", map " << worst_map);
  CHECK(worst_pooled < 1e-2);
  CHECK(worst_map < 1e-2);
}

TEST_CASE("pooled vector is the spatial mean of the maps") {
  if (!have_model()) return;
  Rng rng(1);
  const ImageTensor t = run_pipeline(test::smooth_image(rng, 256, 200), sc_pipeline(ColorspaceId::RGB));
  const BackboneOutput out = shared_backbone().extract_maps(t);
  double worst = 0, lo = 0;
  for (int k = 0; k < kFeatureDim; ++k) {
    worst = std::max(worst, std::abs(out.maps.spatial_mean(k) - out.pooled.values[k]));
    for (int i = 0; i < kMapSize * kMapSize; ++i) lo = std::min(lo, double(out.maps.map(k)[i]));
  }
  CHECK(worst < 1e-4);
  // the last activation is SiLU, whose minimum is -0.27846...
  CHECK(lo >= -0.2785);
  CHECK(out.pooled.branch == ColorspaceId::RGB);
}

TEST_CASE("extraction is deterministic and batch invariant") {
  if (!have_model()) return;
  Rng rng(2);
  std::vector<ImageTensor> imgs;
  for (const auto& cfg : mc_pipelines(true)) imgs.push_back(run_pipeline(test::smooth_image(rng, 224, 224), cfg));
  const Backbone& b = shared_backbone();
  const FeatureVector a1 = b.extract(imgs[1]), a2 = b.extract(imgs[1]);
  CHECK(a1.values == a2.values);
  CHECK(a1.branch == ColorspaceId::LCH);
  const auto batch = b.extract_batch(imgs);
  REQUIRE(batch.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const FeatureVector single = b.extract(imgs[i]);
    double worst = 0;
    for (int k = 0; k < kFeatureDim; ++k)
      worst = std::max(worst, double(std::abs(single.values[k] - batch[i].pooled.values[k])));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("input contract") {
  if (!have_model()) return;
  ImageTensor small(100, 100, ColorspaceId::RGB);
  CHECK_THROWS_AS(shared_backbone().extract(small), ContractError);
  ImageTensor hot(kInputSize, kInputSize, ColorspaceId::RGB);
  hot.data[17] = 300;
  CHECK_THROWS_AS(shared_backbone().extract(hot), ContractError);
  CHECK(shared_backbone().opset() >= 13);
  CHECK(shared_backbone().node_count() > 100);
  CHECK(shared_backbone().weights_digest() == Backbone::load(test::model_path()).weights_digest());
}

TEST_CASE("load errors") {
  test::TempDir dir("bb");
  CHECK_THROWS_AS(Backbone::load(dir / "missing.onnx"), LoadError);
  {
    std::ofstream(dir / "junk.onnx") << "definitely not protobuf \x01\x02\x03";
  }
  CHECK_THROWS_AS(Backbone::load(dir / "junk.onnx"), LoadError);
}
