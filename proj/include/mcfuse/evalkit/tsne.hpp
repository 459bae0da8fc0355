#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mcfuse::evalkit {

/// Exact t-SNE settings; defaults are the canonical values of the original
/// algorithm.
struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  int exaggeration_iters = 250;
  double exaggeration = 12.0;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
};

struct Point2 {
  double x = 0, y = 0;
};

struct Embedding2D {
  std::vector<Point2> points;
  std::vector<int> labels;
};

/// O(N^2) t-SNE with the exact gradient. Requires 5 <= N <= 5000, equal
/// feature lengths, one label per point and perplexity < N / 3
/// (ContractError). Single-threaded and deterministic under the seed.
Embedding2D tsne(std::span<const std::vector<float>> features, std::span<const int> labels,
                 const TsneConfig& cfg);

/// Mean silhouette coefficient with Euclidean distance in the plane.
/// Points alone in their label score 0.
double silhouette(const Embedding2D& e);

/// x,y,label
void write_embedding_csv(const Embedding2D& e, const std::filesystem::path& path);
Embedding2D read_embedding_csv(const std::filesystem::path& path);
/// Scatter plot: circles for GAN, squares for Graphics, triangles for Real.
void write_embedding_svg(const Embedding2D& e, const std::filesystem::path& path, int size = 640);

}  // namespace mcfuse::evalkit
