#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/manifest.hpp"
#include "support.hpp"

using namespace mcfuse;
using namespace mcfuse::evalkit;

namespace {

DatasetManifest synthetic(const std::vector<std::tuple<int, std::string, int>>& strata) {
  DatasetManifest m;
  std::uint64_t id = 1;
  for (const auto& [label, cat, n] : strata)
    for (int i = 0; i < n; ++i) m.records.push_back({id++, "img" + std::to_string(id) + ".jpg", label, cat});
  return m;
}

std::map<Split, int> counts(const DatasetManifest& m) {
  std::map<Split, int> c;
  for (const auto& r : m.records) ++c[r.split];
  return c;
}

}  // namespace

TEST_CASE("ten records split 6/2/2") {
  const auto out = split_dataset(synthetic({{0, "faces", 10}}), {}, 1);
  auto c = counts(out);
  CHECK(c[Split::train] == 6);
  CHECK(c[Split::val] == 2);
  CHECK(c[Split::test] == 2);
}

TEST_CASE("split is a deterministic partition") {
  const DatasetManifest m = synthetic({{0, "a", 17}, {0, "b", 23}, {1, "c", 41}, {2, "d", 9}, {2, "e", 31}});
  const auto a = split_dataset(m, {}, 42), b = split_dataset(m, {}, 42), c = split_dataset(m, {}, 43);
  REQUIRE(a.records.size() == m.records.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].image_id == m.records[i].image_id);
    CHECK(a.records[i].split == b.records[i].split);
    CHECK(a.records[i].split != Split::unassigned);
    differs |= a.records[i].split != c.records[i].split;
  }
  CHECK(differs);
  // the three splits are disjoint and cover the manifest
  std::set<std::uint64_t> all;
  for (Split s : {Split::train, Split::val, Split::test})
    for (const auto* r : a.in_split(s)) CHECK(all.insert(r->image_id).second);
  CHECK(all.size() == m.records.size());
  // every stratum within one image of its exact share
  for (const auto& [label, cat, n] : std::vector<std::tuple<int, std::string, int>>{{0, "a", 17}, {1, "c", 41}}) {
    int train = 0;
    for (const auto& r : a.records)
      if (r.category == cat && r.split == Split::train) ++train;
    CHECK(std::abs(train - 0.6 * n) <= 1.0);
  }
  // per-label totals are exact up to rounding of the label size
  int gan_train = 0;
  for (const auto& r : a.records) gan_train += r.label == 0 && r.split == Split::train;
  CHECK(gan_train == 24);  // round(0.6 * 40)
}

TEST_CASE("tiny strata go to train with a warning") {
  std::vector<std::string> warnings;
  const auto out = split_dataset(synthetic({{1, "rare", 2}, {1, "common", 10}}), {}, 3, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("rare") != std::string::npos);
  CHECK(out.records[0].split == Split::train);
  CHECK(out.records[1].split == Split::train);
}

TEST_CASE("split contracts") {
  DatasetManifest m = synthetic({{0, "a", 5}});
  CHECK_THROWS_AS(split_dataset(m, {50, 20, 20}, 0), ContractError);
  m.records[2].split = Split::test;
  CHECK_THROWS_AS(split_dataset(m, {}, 0), ContractError);
}

TEST_CASE("manifest file round trip and errors") {
  test::TempDir dir("manifest");
  const auto m = split_dataset(synthetic({{0, "a", 6}, {2, "b", 6}}), {}, 9);
  m.write(dir / "m.csv");
  const auto r = DatasetManifest::read(dir / "m.csv");
  REQUIRE(r.records.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(r.records[i].image_id == m.records[i].image_id);
    CHECK(r.records[i].path == m.records[i].path);
    CHECK(r.records[i].label == m.records[i].label);
    CHECK(r.records[i].category == m.records[i].category);
    CHECK(r.records[i].split == m.records[i].split);
  }
  CHECK(r.resolve(r.records[0]) == dir / r.records[0].path);
  CHECK(r.find(5));
  CHECK_FALSE(r.find(500));

  auto write = [&](const std::string& body) {
    std::ofstream(dir / "bad.csv") << "image_id,path,label,category,split\n" << body;
    return dir / "bad.csv";
  };
  CHECK_THROWS_AS(DatasetManifest::read(write("1,a.jpg,0,x,train\n1,b.jpg,0,x,train\n")), DataError);
  CHECK_THROWS_AS(DatasetManifest::read(write("1,a.jpg,4,x,train\n")), DataError);
  CHECK_THROWS_AS(DatasetManifest::read(write("1,a.jpg,0,x,holdout\n")), DataError);
  CHECK_THROWS_AS(DatasetManifest::read(write("x1,a.jpg,0,x,train\n")), DataError);
}

TEST_CASE("bundled corpus manifest") {
  const auto m = DatasetManifest::read(test::corpus_manifest());
  CHECK(m.records.size() == 120);
  const auto s = split_dataset(m, {}, 0);
  auto c = counts(s);
  CHECK(c[Split::train] == 72);
  CHECK(c[Split::val] == 24);
  CHECK(c[Split::test] == 24);
}
