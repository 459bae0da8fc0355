#pragma once

#include <string>
#include <vector>

#include "mcfuse/colorspace.hpp"
#include "mcfuse/imageio.hpp"

namespace mcfuse {

inline constexpr int kInputSize = 224;

struct LoGConfig {
  double sigma = 1.0;
  int kernel_size = 5;  // odd, >= 3
};

/// Sampled Laplacian of Gaussian, mean-centred so the entries sum to zero.
/// Row-major kernel_size x kernel_size.
std::vector<double> log_kernel(const LoGConfig& cfg);

/// clamp(img + LoG * img, 0, 255) per channel, reflect-101 borders.
/// Requires a rescaled tensor (or RGB, which is always 0..255).
ImageTensor log_residual(const ImageTensor& img, const LoGConfig& cfg);

enum class StageOrder {
  rescale_then_log,  // transform -> rescale -> LoG residual (default)
  log_then_rescale,  // transform -> LoG residual (unclamped) -> rescale
};

struct PipelineConfig {
  ColorspaceId colorspace = ColorspaceId::RGB;  // doubles as the branch id
  bool apply_rescale = false;
  bool apply_log_residual = false;
  LoGConfig log;
  StageOrder order = StageOrder::rescale_then_log;
};

/// Throws ContractError for configurations the model family does not allow
/// (e.g. rescaling the RGB branch, bad LoG parameters).
void validate(const PipelineConfig& cfg);

/// Single-colorspace branch: rescaled unless RGB, no LoG block.
PipelineConfig sc_pipeline(ColorspaceId space);
/// RGB, LCH, HSV with LCH/HSV rescaled. `with_log` selects the second model
/// variant (LoG residual on LCH and HSV).
std::vector<PipelineConfig> mc_pipelines(bool with_log, const LoGConfig& log = {});

/// resize to 224x224 -> transform -> optional rescale -> optional LoG residual.
ImageTensor run_pipeline(const imageio::RawImage& img, const PipelineConfig& cfg);

}  // namespace mcfuse
