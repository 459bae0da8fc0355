#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcfuse/fusionhead.hpp"

namespace mcfuse::evalkit {

/// Rows are truth, columns prediction.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

  void add(int truth, int predicted);
  std::uint64_t total() const;
  std::uint64_t row_sum(int c) const;
  /// trace / total; NaN when empty.
  double accuracy() const;
  /// diag / row sum per class; NaN for an empty row.
  std::array<double, kNumClasses> per_class_accuracy() const;
};

struct ImagePrediction {
  std::uint64_t image_id = 0;
  int truth = 0;
  int predicted = 0;
  std::array<double, kNumClasses> probs{};
};

struct Evaluation {
  ConfusionMatrix confusion;
  std::vector<ImagePrediction> predictions;
};

/// Throws DataError on an empty test set.
Evaluation evaluate(const HeadModel& m, std::span<const FusedFeature> test);

/// Provenance printed at the top of every report.
struct ReportMeta {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// metric,value rows: per-class accuracy, total, and the nine matrix cells.
void write_metrics_csv(const Evaluation& e, const ReportMeta& meta, const std::filesystem::path& path);
std::string format_report(const Evaluation& e, const ReportMeta& meta, const std::string& title);

/// image_id,truth,predicted,p_gan,p_graphics,p_real
void write_predictions_csv(const std::vector<ImagePrediction>& p, const std::filesystem::path& path);
std::vector<ImagePrediction> read_predictions_csv(const std::filesystem::path& path);

}  // namespace mcfuse::evalkit
