#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "mcfuse/backbone.hpp"
#include "mcfuse/evalkit/manifest.hpp"
#include "mcfuse/evalkit/metrics.hpp"
#include "mcfuse/imageio.hpp"
#include "mcfuse/preprocess.hpp"

namespace mcfuse::evalkit {

/// Runs every pipeline on `img` and concatenates the pooled features in
/// pipeline order. All branches share one backbone: the branches are frozen
/// copies of the same network, so one set of weights serves them all.
std::vector<float> image_features(const imageio::RawImage& img, const Backbone& backbone,
                                  std::span<const PipelineConfig> pipelines);

struct RobustnessPoint {
  int qf = 0;
  double accuracy = 0;
  ConfusionMatrix confusion;
};

/// For each qf: JPEG-recompress every test record of `m` at qf, rerun the
/// pipelines and backbone, predict with the fixed head. qf=100 is a
/// recompressed point like the others. Images are processed by `workers`
/// threads; counts do not depend on the worker count.
/// Throws DataError when `m` has no test records, ContractError when the
/// head dimension does not match the pipelines.
std::vector<RobustnessPoint> robustness_sweep(const HeadModel& head, const Backbone& backbone,
                                              std::span<const PipelineConfig> pipelines,
                                              const DatasetManifest& m,
                                              std::span<const imageio::QualityFactor> qfs,
                                              int workers = 1);

/// One row per point: qf, accuracy, the nine confusion cells, config hash, seed.
void write_robustness_csv(const std::vector<RobustnessPoint>& points, const ReportMeta& meta,
                          const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception
/// is rethrown after all threads finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace mcfuse::evalkit
