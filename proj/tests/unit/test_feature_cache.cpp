#include <doctest.h>

#include <fstream>

#include "mcfuse/error.hpp"
#include "mcfuse/feature_cache.hpp"
#include "support.hpp"

using namespace mcfuse;

namespace {

CachedFeature make(Rng& rng, std::uint64_t id, std::uint32_t dim) {
  CachedFeature f;
  f.image_id = id;
  f.label = static_cast<std::uint8_t>(id % 3);
  f.branch = ColorspaceId::LCH;
  f.values.resize(dim);
  for (auto& v : f.values) v = static_cast<float>(rng.normal());
  return f;
}

bool same(const CachedFeature& a, const CachedFeature& b) {
  return a.image_id == b.image_id && a.label == b.label && a.branch == b.branch && a.values == b.values;
}

}  // namespace

TEST_CASE("write and read back bit-exactly") {
  test::TempDir dir("cache");
  Rng rng(1);
  FeatureCache c(16);
  for (std::uint64_t id = 1; id <= 20; ++id) c.add(make(rng, id * 7, 16));
  c.write(dir / "f.bin");
  const FeatureCache r = FeatureCache::read(dir / "f.bin");
  REQUIRE(r.size() == 20);
  CHECK(r.dim() == 16);
  for (std::size_t i = 0; i < 20; ++i) CHECK(same(r.records()[i], c.records()[i]));
  REQUIRE(r.find(14));
  CHECK(same(*r.find(14), c.records()[1]));
  CHECK(r.find(15) == nullptr);
}

TEST_CASE("append extends the file and drops an uncommitted tail") {
  test::TempDir dir("append");
  Rng rng(2);
  std::vector<CachedFeature> a, b;
  for (std::uint64_t id = 1; id <= 5; ++id) a.push_back(make(rng, id, 8));
  for (std::uint64_t id = 6; id <= 9; ++id) b.push_back(make(rng, id, 8));
  FeatureCache::append(dir / "f.bin", 8, a);
  // simulate a crash mid-record: garbage past the committed count
  {
    std::ofstream out(dir / "f.bin", std::ios::binary | std::ios::app);
    out << "partial-record";
  }
  CHECK(FeatureCache::read(dir / "f.bin").size() == 5);
  FeatureCache::append(dir / "f.bin", 8, b);
  const FeatureCache r = FeatureCache::read(dir / "f.bin");
  REQUIRE(r.size() == 9);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same(r.records()[5 + i], b[i]));
  CHECK_THROWS_AS(FeatureCache::append(dir / "f.bin", 9, b), DataError);
}

TEST_CASE("malformed caches") {
  test::TempDir dir("badcache");
  Rng rng(3);
  CHECK_THROWS_AS(FeatureCache::read(dir / "none.bin"), IoError);
  {
    std::ofstream(dir / "magic.bin") << "XXXXxxxxxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(FeatureCache::read(dir / "magic.bin"), DataError);
  FeatureCache c(4);
  for (std::uint64_t id = 1; id <= 3; ++id) c.add(make(rng, id, 4));
  c.write(dir / "ok.bin");
  std::filesystem::resize_file(dir / "ok.bin", std::filesystem::file_size(dir / "ok.bin") - 3);
  CHECK_THROWS_AS(FeatureCache::read(dir / "ok.bin"), DataError);
}

TEST_CASE("record contracts") {
  Rng rng(4);
  FeatureCache c(4);
  c.add(make(rng, 1, 4));
  CHECK_THROWS_AS(c.add(make(rng, 1, 4)), DataError);
  CHECK_THROWS_AS(c.add(make(rng, 2, 5)), ContractError);
  auto bad = make(rng, 3, 4);
  bad.label = 3;
  CHECK_THROWS_AS(c.add(bad), ContractError);
}
