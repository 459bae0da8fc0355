#pragma once

// Trainable softmax head over concatenated branch features.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mcfuse/backbone.hpp"

namespace mcfuse {

inline constexpr int kNumClasses = 3;

/// Class ids: 0 GAN, 1 Graphics, 2 Real.
std::string_view label_name(int label);
std::optional<int> parse_label(std::string_view name);

struct FusedFeature {
  std::uint64_t image_id = 0;
  int label = 0;
  std::vector<float> values;
};

/// [rgb | lch | hsv]. Throws ContractError unless the three vectors come from
/// the same image and carry branch ids RGB, LCH, HSV in that order.
FusedFeature concat_features(const FeatureVector& rgb, const FeatureVector& lch,
                             const FeatureVector& hsv);

struct HeadModel {
  int dim = 0;
  std::vector<float> weights;     // kNumClasses x dim, row-major
  std::array<float, kNumClasses> bias{};

  static HeadModel zeros(int dim);
  const float* row(int c) const { return weights.data() + static_cast<std::size_t>(c) * dim; }

  friend bool operator==(const HeadModel&, const HeadModel&) = default;
};

/// 3 * dim + 3.
std::size_t param_count(const HeadModel& m);

struct Prediction {
  std::array<double, kNumClasses> logits{};
  std::array<double, kNumClasses> probs{};
  int label = 0;
};

/// Numerically stable softmax.
std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& logits);
/// argmax with ties to the lowest class id.
int argmax(const std::array<double, kNumClasses>& v);

Prediction predict(const HeadModel& m, std::span<const float> x);

enum class Checkpoint { best_val, final_epoch };

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 256;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::uint64_t seed = 0;
  Checkpoint checkpoint = Checkpoint::best_val;
  /// > 1 splits each mini-batch gradient over threads; partial sums are
  /// combined in a fixed order.
  int workers = 1;
};

/// Validates hyperparameters; throws ContractError.
void validate(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;  // NaN without a validation set
};

struct TrainResult {
  HeadModel model;
  std::vector<EpochLog> log;
  int selected_epoch = 0;  // epoch whose parameters `model` holds
};

/// Mini-batch Adam on mean categorical cross-entropy, zero-initialized.
/// Losses and accuracies are re-evaluated on the full sets after each epoch.
/// With Checkpoint::best_val the parameters of the first epoch reaching the
/// highest validation accuracy are returned (final epoch when `val` is
/// empty). Throws NumericError on empty sets, dimension mismatch, bad labels
/// or non-finite values.
TrainResult train_head(std::span<const FusedFeature> train, const TrainConfig& cfg,
                       std::span<const FusedFeature> val = {});

/// Mean cross-entropy and its gradient for double-precision parameters.
struct LossGradient {
  double loss = 0;
  std::vector<double> dw;                 // kNumClasses x dim
  std::array<double, kNumClasses> db{};
};
LossGradient loss_gradient(std::span<const double> w, std::span<const double> b,
                           std::span<const FusedFeature> batch);

struct SetMetrics {
  double loss = 0;
  double accuracy = 0;
};
SetMetrics evaluate_loss(const HeadModel& m, std::span<const FusedFeature> set);

// Binary head file, little-endian: "MCHD", u32 version, u32 dim, u32 classes,
// f32 weights (row-major), f32 bias.
void save_head(const HeadModel& m, const std::filesystem::path& path);
HeadModel load_head(const std::filesystem::path& path);

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

}  // namespace mcfuse
