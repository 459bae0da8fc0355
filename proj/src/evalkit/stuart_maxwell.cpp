#include <cmath>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/stuart_maxwell.hpp"

namespace mcfuse::evalkit {

double chi2_sf(double x, int df) {
  if (df < 1) throw ContractError("chi2_sf: df must be >= 1");
  if (!(x > 0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

StuartMaxwellResult stuart_maxwell(const Table3& n) {
  StuartMaxwellResult r;
  r.table = n;
  std::uint64_t discordant = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) discordant += n[i][j];
  if (discordant == 0) throw ContractError("Stuart-Maxwell test needs at least one discordant pair");

  Eigen::Vector3d d;
  Eigen::Matrix3d s;
  for (int i = 0; i < 3; ++i) {
    double row = 0, col = 0;
    for (int j = 0; j < 3; ++j) {
      row += static_cast<double>(n[i][j]);
      col += static_cast<double>(n[j][i]);
    }
    d[i] = row - col;
    for (int j = 0; j < 3; ++j)
      s(i, j) = i == j ? row + col - 2.0 * static_cast<double>(n[i][i])
                       : -static_cast<double>(n[i][j] + n[j][i]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(s);
  const auto& lambda = eig.eigenvalues();
  const double tol = 1e-10 * lambda.cwiseAbs().maxCoeff();
  double stat = 0;
  int rank = 0;
  for (int k = 0; k < 3; ++k) {
    if (lambda[k] <= tol) continue;
    ++rank;
    const double proj = eig.eigenvectors().col(k).dot(d);
    stat += proj * proj / lambda[k];
  }
  r.statistic = std::max(stat, 0.0);
  r.df = rank;
  r.reduced = rank < 2;
  r.p_value = chi2_sf(r.statistic, r.df);
  return r;
}

StuartMaxwellResult stuart_maxwell(const PairedPredictions& p) {
  if (p.a.size() != p.b.size() || (!p.truth.empty() && p.truth.size() != p.a.size()))
    throw ContractError("paired predictions have different lengths");
  Table3 t{};
  for (std::size_t i = 0; i < p.a.size(); ++i) {
    if (p.a[i] < 0 || p.a[i] > 2 || p.b[i] < 0 || p.b[i] > 2) throw ContractError("label out of range");
    ++t[p.a[i]][p.b[i]];
  }
  return stuart_maxwell(t);
}

}  // namespace mcfuse::evalkit
