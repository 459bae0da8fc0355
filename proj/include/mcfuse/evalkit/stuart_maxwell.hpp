#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace mcfuse::evalkit {

using Table3 = std::array<std::array<std::uint64_t, 3>, 3>;

/// Per-image labels from two classifiers on the same test set.
struct PairedPredictions {
  std::vector<int> truth;
  std::vector<int> a;
  std::vector<int> b;
};

struct StuartMaxwellResult {
  Table3 table{};  // rows: classifier A, columns: classifier B
  double statistic = 0;
  int df = 0;
  double p_value = 1;
  bool reduced = false;  // covariance was singular; df < 2
};

/// Chi-square survival function P(X > x), regularized upper incomplete gamma.
double chi2_sf(double x, int df);

/// Marginal homogeneity test. statistic = d' S^+ d over all three categories,
/// where d_i = row_i - col_i and S_ii = row_i + col_i - 2 N_ii,
/// S_ij = -(N_ij + N_ji). S always has rank <= 2; its Moore-Penrose inverse
/// equals the usual two-category inverse when the rank is 2 and restricts the
/// test to the non-degenerate subspace otherwise, with df = rank(S).
/// Throws ContractError when there are no discordant pairs.
StuartMaxwellResult stuart_maxwell(const Table3& table);
StuartMaxwellResult stuart_maxwell(const PairedPredictions& p);

}  // namespace mcfuse::evalkit
