#include <algorithm>
#include <cmath>
#include <limits>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/tsne.hpp"
#include "mcfuse/simd/kernels.hpp"
#include "mcfuse/util/rng.hpp"

namespace mcfuse::evalkit {
namespace {

constexpr double kMinProb = 1e-12;

// Row i of the conditional affinities P(j|i) for squared distances d2,
// with beta found by bisection so that the entropy (nats) matches log(perp).
void conditional_row(const double* d2, std::size_t n, std::size_t i, double perplexity, double* p) {
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    // shift by the smallest distance so exp() never underflows to all zeros
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2[j]);
    double sum = 0, wsum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = j == i ? 0.0 : std::exp(-beta * (d2[j] - dmin));
      sum += p[j];
      wsum += p[j] * (d2[j] - dmin);
    }
    const double h = std::log(sum) + beta * wsum / sum;
    for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
    const double diff = h - target;
    if (std::abs(diff) < 1e-5) return;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
    } else {
      hi = beta;
      beta = (beta + lo) / 2;
    }
  }
}

}  // namespace

Embedding2D tsne(std::span<const std::vector<float>> features, std::span<const int> labels,
                 const TsneConfig& cfg) {
  const std::size_t n = features.size();
  if (n < 5 || n > 5000) throw ContractError("tsne: point count must be in [5, 5000]");
  if (labels.size() != n) throw ContractError("tsne: one label per point required");
  if (!(cfg.perplexity > 0) || cfg.perplexity >= static_cast<double>(n) / 3)
    throw ContractError("tsne: perplexity must be positive and below N/3");
  if (cfg.iterations < 1 || cfg.exaggeration_iters < 0 || !(cfg.learning_rate > 0) || !(cfg.exaggeration > 0))
    throw ContractError("tsne: bad optimizer settings");
  const std::size_t dim = features[0].size();
  if (dim == 0) throw ContractError("tsne: empty feature vectors");

  // zero-mean, then scale by the largest magnitude
  std::vector<double> x(n * dim);
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != dim) throw ContractError("tsne: feature lengths differ");
    for (std::size_t k = 0; k < dim; ++k) {
      if (!std::isfinite(features[i][k])) throw NumericError("tsne: non-finite feature");
      mean[k] += features[i][k];
    }
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  double maxabs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) {
      x[i * dim + k] = features[i][k] - mean[k];
      maxabs = std::max(maxabs, std::abs(x[i * dim + k]));
    }
  if (maxabs > 0)
    for (auto& v : x) v /= maxabs;

  const simd::Kernels& kern = simd::active();
  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d2[i * n + j] = d2[j * n + i] = kern.sqdist_f64(dim, &x[i * dim], &x[j * dim]);

  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i) conditional_row(&d2[i * n], n, i, cfg.perplexity, &p[i * n]);
  {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = p[i * n + j] + p[j * n + i];
        p[i * n + j] = p[j * n + i] = s;
        total += 2 * s;
      }
    for (auto& v : p) v = std::max(v / total, kMinProb);
    for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0;
  }

  Rng rng(cfg.seed);
  std::vector<double> y(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
  for (auto& v : y) v = 1e-4 * rng.normal();
  std::vector<double> num(n * n);

  for (int it = 0; it < cfg.iterations; ++it) {
    const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
    const double momentum = it < 250 ? 0.5 : 0.8;
    double qsum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = q;
        qsum += 2 * q;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0, gy = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = std::max(num[i * n + j] / qsum, kMinProb);
        const double m = (exag * p[i * n + j] - q) * num[i * n + j];
        gx += m * (y[2 * i] - y[2 * j]);
        gy += m * (y[2 * i + 1] - y[2 * j + 1]);
      }
      grad[2 * i] = 4 * gx;
      grad[2 * i + 1] = 4 * gy;
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same_sign = (grad[k] > 0) == (update[k] > 0);
      gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
      update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double cx = 0, cy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cx += y[2 * i];
      cy += y[2 * i + 1];
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= cx;
      y[2 * i + 1] -= cy;
    }
  }

  Embedding2D e;
  e.labels.assign(labels.begin(), labels.end());
  e.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    e.points[i] = {y[2 * i], y[2 * i + 1]};
    if (!std::isfinite(y[2 * i]) || !std::isfinite(y[2 * i + 1])) throw NumericError("tsne: embedding diverged");
  }
  return e;
}

double silhouette(const Embedding2D& e) {
  const std::size_t n = e.points.size();
  if (n == 0 || e.labels.size() != n) throw ContractError("silhouette: bad embedding");
  std::vector<int> ids = e.labels;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw ContractError("silhouette needs at least two labels");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(ids.size(), 0.0);
    std::vector<std::size_t> count(ids.size(), 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto c = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), e.labels[j]) - ids.begin());
      sum[c] += std::hypot(e.points[i].x - e.points[j].x, e.points[i].y - e.points[j].y);
      ++count[c];
    }
    const auto own = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), e.labels[i]) - ids.begin());
    if (count[own] == 0) continue;
    const double a = sum[own] / static_cast<double>(count[own]);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ids.size(); ++c)
      if (c != own && count[c]) b = std::min(b, sum[c] / static_cast<double>(count[c]));
    const double denom = std::max(a, b);
    total += denom > 0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace mcfuse::evalkit
