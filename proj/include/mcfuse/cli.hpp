#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcfuse/evalkit/manifest.hpp"
#include "mcfuse/evalkit/tsne.hpp"
#include "mcfuse/fusionhead.hpp"
#include "mcfuse/preprocess.hpp"

namespace mcfuse::cli {

/// Exit codes of every subcommand.
enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

struct PsychoConfig {
  std::filesystem::path study_dir;
  std::string study_id = "study";
  int images_per_session = 30;
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// INI file with sections [experiment], [train], [log], [split], [tsne],
/// [psycho]. Every key is optional; defaults reproduce the fused model with
/// the LoG block and the published training setup.
struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path backbone;
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
  std::vector<ColorspaceId> branches = {ColorspaceId::RGB, ColorspaceId::LCH, ColorspaceId::HSV};
  bool log_residual = true;
  StageOrder stage_order = StageOrder::rescale_then_log;
  int workers = 1;
  TrainConfig train;
  LoGConfig log;
  evalkit::SplitRatios split;
  evalkit::TsneConfig tsne;
  PsychoConfig psycho;

  /// One pipeline per branch; non-RGB branches are rescaled and, with
  /// log_residual, get the LoG block.
  std::vector<PipelineConfig> pipelines() const;
};

/// Relative paths are resolved against the file's directory. Unknown keys
/// and malformed values throw ContractError.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text form; load_config(save_config(c)) == c.
std::string config_text(const ExperimentConfig& c);
void save_config(const ExperimentConfig& c, const std::filesystem::path& path);
/// FNV-1a of config_text, hex.
std::string config_hash(const ExperimentConfig& c);

/// Entry point of the mcfuse tool; returns an ExitCode.
int run_cli(int argc, char** argv);

}  // namespace mcfuse::cli
