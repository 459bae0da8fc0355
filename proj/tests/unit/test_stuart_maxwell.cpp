#include <doctest.h>

#include <cmath>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/stuart_maxwell.hpp"
#include "support.hpp"

using namespace mcfuse;
using namespace mcfuse::evalkit;

namespace {

// Frozen from tests/oracles/gen_stuart_maxwell.py: statsmodels
// SquareTable.homogeneity and a direct 2x2 solve agree on both values.
const Table3 kExample = {{{20, 5, 0}, {2, 30, 4}, {1, 3, 35}}};
constexpr double kExampleStatistic = 0.5079365079365078;
constexpr double kExampleP = 0.7757164275739283;

// Textbook form: drop the last category and invert the 2x2 covariance.
double two_category_statistic(const Table3& t) {
  double row[3] = {}, col[3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) row[i] += double(t[i][j]), col[j] += double(t[i][j]);
  const double d0 = row[0] - col[0], d1 = row[1] - col[1];
  const double s00 = row[0] + col[0] - 2.0 * t[0][0], s11 = row[1] + col[1] - 2.0 * t[1][1];
  const double s01 = -double(t[0][1] + t[1][0]);
  const double det = s00 * s11 - s01 * s01;
  return (s11 * d0 * d0 - 2 * s01 * d0 * d1 + s00 * d1 * d1) / det;
}

Table3 permute(const Table3& t, const int p[3]) {
  Table3 o{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) o[p[i]][p[j]] = t[i][j];
  return o;
}

}  // namespace

TEST_CASE("example table matches the frozen oracle") {
  const auto r = stuart_maxwell(kExample);
  CHECK(r.df == 2);
  CHECK_FALSE(r.reduced);
  CHECK(std::abs(r.statistic - kExampleStatistic) < 1e-9);
  CHECK(std::abs(r.p_value - kExampleP) < 1e-6);
  // closed form for two degrees of freedom
  CHECK(std::abs(r.p_value - std::exp(-kExampleStatistic / 2)) < 1e-12);
  CHECK(std::abs(two_category_statistic(kExample) - kExampleStatistic) < 1e-12);
}

TEST_CASE("agrees with the two-category formula on random full-rank tables") {
  Rng rng(17);
  int checked = 0;
  for (int n = 0; n < 500; ++n) {
    Table3 t{};
    for (auto& row : t)
      for (auto& c : row) c = rng.below(12);
    const double direct = two_category_statistic(t);
    if (!std::isfinite(direct)) continue;
    const auto r = stuart_maxwell(t);
    if (r.reduced) continue;
    CHECK(r.statistic == doctest::Approx(direct).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked > 400);
}

TEST_CASE("symmetric table has statistic zero") {
  const Table3 t = {{{10, 4, 2}, {4, 10, 3}, {2, 3, 10}}};
  const auto r = stuart_maxwell(t);
  CHECK(r.statistic == doctest::Approx(0.0).scale(1));
  CHECK(r.p_value == doctest::Approx(1.0));
}

TEST_CASE("relabelling the categories leaves the result unchanged") {
  const auto base = stuart_maxwell(kExample);
  const int perms[][3] = {{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& p : perms) {
    const auto r = stuart_maxwell(permute(kExample, p));
    CHECK(r.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
    CHECK(r.df == 2);
  }
}

TEST_CASE("singular covariance reduces the degrees of freedom") {
  // discordance only between categories 0 and 1
  const Table3 t = {{{10, 6, 0}, {2, 10, 0}, {0, 0, 10}}};
  const auto r = stuart_maxwell(t);
  CHECK(r.df == 1);
  CHECK(r.reduced);
  // reduces to McNemar without continuity correction: (6-2)^2/(6+2)
  CHECK(r.statistic == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(chi2_sf(2.0, 1)).epsilon(1e-12));
  CHECK_THROWS_AS(stuart_maxwell(Table3{{{5, 0, 0}, {0, 5, 0}, {0, 0, 5}}}), ContractError);
}

TEST_CASE("chi-square survival function") {
  for (double x : {0.1, 0.5, 1.0, 3.0, 10.0, 40.0}) CHECK(std::abs(chi2_sf(x, 2) - std::exp(-x / 2)) < 1e-10);
  CHECK(chi2_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(chi2_sf(0, 3) == 1.0);
  CHECK_THROWS_AS(chi2_sf(1.0, 0), ContractError);
}

TEST_CASE("paired predictions build the A-by-B table") {
  PairedPredictions p;
  p.a = {0, 0, 1, 2, 2};
  p.b = {0, 1, 1, 0, 2};
  p.truth = {0, 0, 1, 2, 2};
  const auto r = stuart_maxwell(p);
  CHECK(r.table[0][0] == 1);
  CHECK(r.table[0][1] == 1);
  CHECK(r.table[2][0] == 1);
  p.b.pop_back();
  CHECK_THROWS_AS(stuart_maxwell(p), ContractError);
  p.b = {0, 1, 1, 0, 3};
  CHECK_THROWS_AS(stuart_maxwell(p), ContractError);
}

TEST_CASE("type I error under marginal homogeneity is near the nominal level") {
  // Tables drawn from the symmetrized example probabilities; the oracle
  // script measured 0.0439 with 10^6 draws.
  double cell[9];
  double total = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) total += cell[i * 3 + j] = (double(kExample[i][j]) + double(kExample[j][i])) / 2;
  for (double& c : cell) c /= total;
  Rng rng(2024);
  int rejected = 0, used = 0;
  for (int n = 0; n < 20000; ++n) {
    Table3 t{};
    for (int k = 0; k < 100; ++k) {
      double u = rng.uniform(), acc = 0;
      int idx = 8;
      for (int c = 0; c < 9; ++c)
        if (u < (acc += cell[c])) {
          idx = c;
          break;
        }
      ++t[idx / 3][idx % 3];
    }
    const double off = double(t[0][1] + t[1][0] + t[0][2] + t[2][0] + t[1][2] + t[2][1]);
    if (off == 0) continue;
    const auto r = stuart_maxwell(t);
    ++used;
    rejected += r.p_value < 0.05;
  }
  const double rate = double(rejected) / used;
  MESSAGE("rejection rate " << rate);
  CHECK(rate > 0.03);
  CHECK(rate < 0.06);
}
