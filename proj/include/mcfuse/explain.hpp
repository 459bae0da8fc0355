#pragma once

// Class activation maps for the linear head. With global average pooling
// followed by a linear layer, logit_c = b_c + mean_xy sum_k w_ck A_k(x,y), so
// the map sum_k w_ck A_k is exact Grad-CAM up to the 1/(H*W) constant.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcfuse/backbone.hpp"
#include "mcfuse/fusionhead.hpp"
#include "mcfuse/imageio.hpp"

namespace mcfuse::explain {

inline constexpr int kHeatmapSize = 224;

struct Heatmap {
  int width = kHeatmapSize;
  int height = kHeatmapSize;
  int label = 0;
  std::vector<float> values;  // row-major, in [0,1]
  /// Per-branch raw maps before rectification, 7x7 each, branch order.
  std::vector<std::vector<double>> branch_maps;
  /// Sum of the branch maps before rectification.
  std::vector<double> raw_combined;
  int map_width = 0, map_height = 0;
  /// Rectified raw map was identically zero; values are all 0.
  bool all_zero = false;
};

/// Requires head.dim == maps.size() * channels and equal map shapes
/// (ContractError). Branch maps are summed, rectified, bilinearly upsampled
/// (half-pixel centers) to 224x224 and divided by their maximum.
Heatmap cam(const HeadModel& head, std::span<const FeatureMapStack> maps, int label);

/// mean(raw_combined) + bias; equals the head logit for the pooled features.
double cam_logit(const Heatmap& h, const HeadModel& head);

/// Jet colormap value for t in [0,1].
std::array<std::uint8_t, 3> jet(double t);

/// out = round(0.6 * img + 0.4 * jet(h)); the heatmap is resampled to the
/// image size when they differ.
imageio::RawImage overlay(const Heatmap& h, const imageio::RawImage& img);

/// Heatmap as 8-bit grayscale (round(255 * v)).
void save_heatmap_png(const Heatmap& h, const std::filesystem::path& path);

struct Box {
  int x = 0, y = 0, w = 1, h = 1;
  friend bool operator==(const Box&, const Box&) = default;
};

struct RegionMarking {
  std::vector<Box> boxes;
  std::string annotation_id;
  int frame_width = 0;   // size of the image the boxes were drawn on
  int frame_height = 0;
};

/// Throws ContractError when a box has w or h < 1 or leaves the frame.
void validate(const RegionMarking& r);

/// Maps boxes from the marking's frame onto a width x height frame. Edges
/// are scaled and rounded outward so the box never shrinks.
RegionMarking scale_marking(const RegionMarking& r, int width, int height);

struct Agreement {
  double energy_fraction = 0;  // heatmap mass inside the union of boxes
  bool pointing_hit = false;   // argmax pixel (first in row-major order) inside a box
  bool zero_heatmap = false;   // energy_fraction defined as 0
};

/// Boxes are rescaled to the heatmap frame first when the frames differ.
Agreement marking_agreement(const Heatmap& h, const RegionMarking& r);

struct AgreementRow {
  std::uint64_t image_id = 0;
  int label = 0;
  Agreement agreement;
};
/// image_id,class,energy_fraction,pointing_hit
void write_agreement_csv(const std::vector<AgreementRow>& rows, const std::filesystem::path& path);

}  // namespace mcfuse::explain
