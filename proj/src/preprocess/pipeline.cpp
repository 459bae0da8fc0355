#include <string>

#include "mcfuse/error.hpp"
#include "mcfuse/preprocess.hpp"

namespace mcfuse {

namespace detail {
void add_log_response(const float* in, float* out, int width, int height,
                      const std::vector<double>& kernel, int ksize);
}

void validate(const PipelineConfig& cfg) {
  if (cfg.colorspace == ColorspaceId::RGB && (cfg.apply_rescale || cfg.apply_log_residual))
    throw ContractError("the RGB branch takes raw pixels: no rescale, no LoG residual");
  if (cfg.apply_log_residual) {
    if (!cfg.apply_rescale)
      throw ContractError(std::string(to_string(cfg.colorspace)) +
                          ": LoG residual requires the rescale stage");
    (void)log_kernel(cfg.log);
  }
}

PipelineConfig sc_pipeline(ColorspaceId space) {
  PipelineConfig cfg;
  cfg.colorspace = space;
  cfg.apply_rescale = space != ColorspaceId::RGB;
  return cfg;
}

std::vector<PipelineConfig> mc_pipelines(bool with_log, const LoGConfig& log) {
  std::vector<PipelineConfig> out = {sc_pipeline(ColorspaceId::RGB), sc_pipeline(ColorspaceId::LCH),
                                     sc_pipeline(ColorspaceId::HSV)};
  for (auto& cfg : out) {
    cfg.log = log;
    cfg.apply_log_residual = with_log && cfg.colorspace != ColorspaceId::RGB;
  }
  return out;
}

ImageTensor run_pipeline(const imageio::RawImage& img, const PipelineConfig& cfg) {
  validate(cfg);
  ImageTensor t = transform(to_tensor(imageio::resize(img, kInputSize, kInputSize)), cfg.colorspace);
  if (!cfg.apply_rescale) return t;
  if (cfg.apply_log_residual && cfg.order == StageOrder::log_then_rescale) {
    const auto kernel = log_kernel(cfg.log);
    ImageTensor residual = t;
    for (int c = 0; c < 3; ++c)
      detail::add_log_response(t.channel(c), residual.channel(c), t.width, t.height, kernel,
                               cfg.log.kernel_size);
    return rescale_0_255(residual);
  }
  t = rescale_0_255(t);
  if (cfg.apply_log_residual) t = log_residual(t, cfg.log);
  return t;
}

}  // namespace mcfuse
