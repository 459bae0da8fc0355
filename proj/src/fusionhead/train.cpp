#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

#include "mcfuse/error.hpp"
#include "mcfuse/fusionhead.hpp"
#include "mcfuse/simd/kernels.hpp"
#include "mcfuse/util/rng.hpp"

namespace mcfuse {
namespace {

struct Dataset {
  int dim = 0;
  std::vector<double> x;  // n x dim
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  const double* row(std::size_t i) const { return x.data() + i * static_cast<std::size_t>(dim); }
};

Dataset to_dataset(std::span<const FusedFeature> set, int dim, const char* what) {
  Dataset d;
  d.dim = dim;
  d.x.reserve(set.size() * static_cast<std::size_t>(dim));
  for (const auto& f : set) {
    if (f.values.size() != static_cast<std::size_t>(dim))
      throw NumericError(std::string(what) + ": feature " + std::to_string(f.image_id) + " has dimension " +
                         std::to_string(f.values.size()) + ", expected " + std::to_string(dim));
    if (f.label < 0 || f.label >= kNumClasses)
      throw NumericError(std::string(what) + ": label out of range for image " + std::to_string(f.image_id));
    for (float v : f.values) {
      if (!std::isfinite(v))
        throw NumericError(std::string(what) + ": non-finite feature in image " + std::to_string(f.image_id));
      d.x.push_back(v);
    }
    d.y.push_back(f.label);
  }
  return d;
}

// Adds the summed (not averaged) loss and gradient over idx[begin, end).
void accumulate(const Dataset& d, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                const double* w, const double* b, double* dw, double* db, double& loss,
                const simd::Kernels& k) {
  const std::size_t dim = static_cast<std::size_t>(d.dim);
  for (std::size_t t = begin; t < end; ++t) {
    const std::size_t i = idx[t];
    const double* x = d.row(i);
    std::array<double, kNumClasses> z{};
    for (int c = 0; c < kNumClasses; ++c) z[c] = k.dot_f64(dim, w + c * dim, x) + b[c];
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double v : z) s += std::exp(v - mx);
    loss += mx + std::log(s) - z[d.y[i]];
    for (int c = 0; c < kNumClasses; ++c) {
      const double g = std::exp(z[c] - mx) / s - (c == d.y[i] ? 1.0 : 0.0);
      k.axpy_f64(dim, g, x, dw + c * dim);
      db[c] += g;
    }
  }
}

HeadModel round_to_model(int dim, const std::vector<double>& w, const std::array<double, kNumClasses>& b) {
  HeadModel m = HeadModel::zeros(dim);
  for (std::size_t i = 0; i < w.size(); ++i) m.weights[i] = static_cast<float>(w[i]);
  for (int c = 0; c < kNumClasses; ++c) m.bias[c] = static_cast<float>(b[c]);
  return m;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0) || cfg.batch_size < 1 || cfg.epochs < 1)
    throw ContractError("learning rate, batch size and epochs must be positive");
  if (!(cfg.beta1 > 0 && cfg.beta1 < 1) || !(cfg.beta2 > 0 && cfg.beta2 < 1) || !(cfg.epsilon > 0))
    throw ContractError("Adam decays must lie in (0,1) and epsilon must be positive");
  if (cfg.workers < 1) throw ContractError("workers must be >= 1");
}

LossGradient loss_gradient(std::span<const double> w, std::span<const double> b,
                           std::span<const FusedFeature> batch) {
  if (batch.empty()) throw NumericError("empty batch");
  if (b.size() != kNumClasses || w.size() % kNumClasses) throw ContractError("parameter shape");
  const int dim = static_cast<int>(w.size() / kNumClasses);
  const Dataset d = to_dataset(batch, dim, "loss_gradient");
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  LossGradient g;
  g.dw.assign(w.size(), 0.0);
  accumulate(d, idx, 0, idx.size(), w.data(), b.data(), g.dw.data(), g.db.data(), g.loss, simd::scalar_kernels());
  const double n = static_cast<double>(d.size());
  g.loss /= n;
  for (double& v : g.dw) v /= n;
  for (double& v : g.db) v /= n;
  return g;
}

TrainResult train_head(std::span<const FusedFeature> train, const TrainConfig& cfg,
                       std::span<const FusedFeature> val) {
  validate(cfg);
  if (train.empty()) throw NumericError("training set is empty");
  const int dim = static_cast<int>(train.front().values.size());
  if (dim < 1) throw NumericError("zero-length features");
  const Dataset data = to_dataset(train, dim, "train");
  (void)to_dataset(val, dim, "val");  // validation only

  const auto& k = simd::active();
  const std::size_t pcount = static_cast<std::size_t>(kNumClasses) * dim;
  std::vector<double> w(pcount, 0.0), mw(pcount, 0.0), vw(pcount, 0.0), gw(pcount);
  std::array<double, kNumClasses> b{}, mb{}, vb{}, gb{};
  const int workers = std::min<int>(cfg.workers, cfg.batch_size);
  std::vector<std::vector<double>> part_w(workers, std::vector<double>(pcount));
  std::vector<std::array<double, kNumClasses>> part_b(workers);
  std::vector<double> part_loss(workers);

  TrainResult result;
  result.model = HeadModel::zeros(dim);
  double best_val = -1;
  std::int64_t step = 0;
  std::vector<std::size_t> order(data.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span(order));

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n = end - start;
      std::fill(gw.begin(), gw.end(), 0.0);
      gb = {};
      double loss = 0;
      if (workers == 1) {
        accumulate(data, order, start, end, w.data(), b.data(), gw.data(), gb.data(), loss, k);
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) {
          const std::size_t lo = start + n * t / workers, hi = start + n * (t + 1) / workers;
          pool.emplace_back([&, t, lo, hi] {
            std::fill(part_w[t].begin(), part_w[t].end(), 0.0);
            part_b[t] = {};
            part_loss[t] = 0;
            accumulate(data, order, lo, hi, w.data(), b.data(), part_w[t].data(), part_b[t].data(),
                       part_loss[t], k);
          });
        }
        for (auto& th : pool) th.join();
        for (int t = 0; t < workers; ++t) {
          k.axpy_f64(pcount, 1.0, part_w[t].data(), gw.data());
          for (int c = 0; c < kNumClasses; ++c) gb[c] += part_b[t][c];
          loss += part_loss[t];
        }
      }
      if (!std::isfinite(loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));

      ++step;
      const double inv_n = 1.0 / static_cast<double>(n);
      const double lr_t = cfg.learning_rate * std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(step))) /
                          (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
      auto adam = [&](double& p, double& m, double& v, double g) {
        g *= inv_n;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        p -= lr_t * m / (std::sqrt(v) + cfg.epsilon);
      };
      for (std::size_t i = 0; i < pcount; ++i) adam(w[i], mw[i], vw[i], gw[i]);
      for (int c = 0; c < kNumClasses; ++c) adam(b[c], mb[c], vb[c], gb[c]);
    }

    HeadModel current = round_to_model(dim, w, b);
    const SetMetrics tr = evaluate_loss(current, train);
    EpochLog row{epoch, tr.loss, tr.accuracy, std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN()};
    if (!val.empty()) {
      const SetMetrics va = evaluate_loss(current, val);
      row.val_loss = va.loss;
      row.val_acc = va.accuracy;
    }
    if (!std::isfinite(row.train_loss)) throw NumericError("non-finite training loss after epoch " + std::to_string(epoch));
    result.log.push_back(row);

    const bool take = cfg.checkpoint == Checkpoint::final_epoch || val.empty()
                          ? epoch == cfg.epochs
                          : row.val_acc > best_val;
    if (take) {
      if (!val.empty()) best_val = std::max(best_val, row.val_acc);
      result.model = std::move(current);
      result.selected_epoch = epoch;
    }
  }
  return result;
}

}  // namespace mcfuse
