#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/fmt/fmt.h>

#include "mcfuse/error.hpp"
#include "mcfuse/evalkit/robustness.hpp"

namespace mcfuse::evalkit {

std::vector<float> image_features(const imageio::RawImage& img, const Backbone& backbone,
                                  std::span<const PipelineConfig> pipelines) {
  std::vector<float> out;
  out.reserve(pipelines.size() * kFeatureDim);
  for (const auto& cfg : pipelines) {
    const FeatureVector f = backbone.extract(run_pipeline(img, cfg));
    out.insert(out.end(), f.values.begin(), f.values.end());
  }
  return out;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first) std::rethrow_exception(first);
}

std::vector<RobustnessPoint> robustness_sweep(const HeadModel& head, const Backbone& backbone,
                                              std::span<const PipelineConfig> pipelines,
                                              const DatasetManifest& m,
                                              std::span<const imageio::QualityFactor> qfs, int workers) {
  const auto test = m.in_split(Split::test);
  if (test.empty()) throw DataError("robustness sweep: manifest has no test records");
  if (pipelines.empty() || head.dim != static_cast<int>(pipelines.size()) * kFeatureDim)
    throw ContractError(fmt::format("robustness sweep: head dim {} does not match {} branch(es)", head.dim,
                                    pipelines.size()));
  for (const auto& p : pipelines) validate(p);

  // decode once; every qf starts from the stored image
  std::vector<imageio::RawImage> originals(test.size());
  parallel_for(test.size(), workers, [&](std::size_t i) { originals[i] = imageio::load_image(m.resolve(*test[i])); });

  std::vector<RobustnessPoint> points;
  for (const auto qf : qfs) {
    std::vector<int> predicted(test.size());
    parallel_for(test.size(), workers, [&](std::size_t i) {
      const auto degraded = imageio::jpeg_recompress(originals[i], qf);
      predicted[i] = predict(head, image_features(degraded, backbone, pipelines)).label;
    });
    RobustnessPoint p;
    p.qf = qf.value();
    for (std::size_t i = 0; i < test.size(); ++i) p.confusion.add(test[i]->label, predicted[i]);
    p.accuracy = p.confusion.accuracy();
    points.push_back(p);
  }
  return points;
}

void write_robustness_csv(const std::vector<RobustnessPoint>& points, const ReportMeta& meta,
                          const std::filesystem::path& path) {
  if (points.empty()) throw DataError("refusing to write an empty robustness table");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "qf,accuracy";
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p) out << ",cm_" << label_name(t) << "_" << label_name(p);
  out << ",config_hash,seed\n";
  for (const auto& pt : points) {
    out << fmt::format("{},{:.6f}", pt.qf, pt.accuracy);
    for (const auto& row : pt.confusion.counts)
      for (auto v : row) out << "," << v;
    out << "," << meta.config_hash << "," << meta.seed << "\n";
  }
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

}  // namespace mcfuse::evalkit
