#include <cmath>
#include <string>

#include "backbone/graph.hpp"
#include "mcfuse/backbone.hpp"
#include "mcfuse/error.hpp"
#include "mcfuse/preprocess.hpp"
#include "mcfuse/util/hash.hpp"

namespace mcfuse {

struct Backbone::Impl {
  onnxrt::Graph graph;
  std::size_t maps_index = 0;
  std::size_t pooled_index = 1;
};

double FeatureMapStack::spatial_mean(int k) const {
  const float* m = map(k);
  double s = 0.0;
  for (int i = 0; i < height * width; ++i) s += m[i];
  return s / (height * width);
}

namespace {

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

onnxrt::Tensor probe_input(float scale) {
  onnxrt::Tensor t;
  t.shape = {1, 3, kInputSize, kInputSize};
  t.data.resize(t.numel());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kInputSize; ++y)
      for (int x = 0; x < kInputSize; ++x)
        t.data[(static_cast<std::size_t>(c) * kInputSize + y) * kInputSize + x] =
            static_cast<float>((37 * c + 3 * y + 5 * x) % 256) * scale;
  return t;
}

}  // namespace

Backbone Backbone::load(const std::filesystem::path& model_file) {
  auto impl = std::make_shared<Impl>();
  impl->graph = onnxrt::load_graph(model_file);
  auto& g = impl->graph;

  const auto& in = g.input_shape;
  if (!in.empty()) {
    const bool ok = in.size() == 4 && in[1] == 3 && (in[2] == kInputSize || in[2] < 0) &&
                    (in[3] == kInputSize || in[3] < 0);
    if (!ok) throw LoadError("input '" + g.input_name + "' has shape " + shape_str(in) + ", expected [N,3,224,224]");
  }
  if (g.outputs.size() != 2)
    throw LoadError("expected 2 outputs (feature maps, pooled), graph has " + std::to_string(g.outputs.size()));

  Backbone b;
  b.impl_ = impl;
  b.kernels_ = &simd::active();

  std::vector<onnxrt::Tensor> out;
  try {
    out = onnxrt::run(g, probe_input(1.0f), *b.kernels_);
  } catch (const Error& e) {
    throw LoadError(std::string("probe inference failed: ") + e.what());
  }
  int maps = -1, pooled = -1;
  for (std::size_t i = 0; i < 2; ++i) {
    if (g.output_names[i] == "feature_maps") maps = static_cast<int>(i);
    if (g.output_names[i] == "pooled") pooled = static_cast<int>(i);
  }
  if (maps < 0 || pooled < 0) {
    maps = out[0].shape.size() == 4 ? 0 : 1;
    pooled = 1 - maps;
  }
  const auto& ms = out[maps].shape;
  const auto& ps = out[pooled].shape;
  if (ps.size() != 2 || ps[0] != 1 || ps[1] != kFeatureDim)
    throw LoadError("pooled output has shape " + shape_str(ps) + ", expected [N,1280]");
  if (ms.size() != 4 || ms[1] != kFeatureDim || ms[2] != kMapSize || ms[3] != kMapSize)
    throw LoadError("feature map output has shape " + shape_str(ms) + ", expected [N,1280,7,7]");
  for (float v : out[pooled].data)
    if (!std::isfinite(v)) throw LoadError("probe produced non-finite features");
  for (int k = 0; k < kFeatureDim; ++k) {
    double s = 0;
    for (int i = 0; i < kMapSize * kMapSize; ++i) s += out[maps].data[k * kMapSize * kMapSize + i];
    if (std::fabs(s / (kMapSize * kMapSize) - out[pooled].data[k]) > 1e-4)
      throw LoadError("pooled output is not the spatial mean of the feature map output");
  }
  impl->maps_index = static_cast<std::size_t>(maps);
  impl->pooled_index = static_cast<std::size_t>(pooled);

  // A graph exported for 0..1 inputs (or without normalization at all) would
  // respond identically up to scale; require a real difference.
  const auto low = onnxrt::run(g, probe_input(1.0f / 255.0f), *b.kernels_);
  double diff = 0, mag = 0;
  for (int k = 0; k < kFeatureDim; ++k) {
    diff = std::max(diff, static_cast<double>(std::fabs(low[pooled].data[k] - out[pooled].data[k])));
    mag = std::max(mag, static_cast<double>(std::fabs(out[pooled].data[k])));
  }
  if (!(diff > 1e-4 * std::max(mag, 1.0)))
    throw LoadError("graph output does not depend on input scale; expected 0..255 inputs");
  return b;
}

Backbone Backbone::with_kernels(const simd::Kernels& k) const {
  Backbone b = *this;
  b.kernels_ = &k;
  return b;
}

std::int64_t Backbone::opset() const { return impl_->graph.opset; }
std::size_t Backbone::node_count() const { return impl_->graph.nodes.size(); }

std::uint64_t Backbone::weights_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& c : impl_->graph.constants) {
    if (!c) continue;
    h = fnv1a64(std::as_bytes(std::span(c->data)), h);
    h = fnv1a64(std::as_bytes(std::span(c->ints)), h);
  }
  return h;
}

std::vector<BackboneOutput> Backbone::extract_batch(std::span<const ImageTensor> imgs) const {
  if (imgs.empty()) return {};
  const std::size_t plane = static_cast<std::size_t>(kInputSize) * kInputSize;
  onnxrt::Tensor in;
  in.shape = {static_cast<std::int64_t>(imgs.size()), 3, kInputSize, kInputSize};
  in.data.reserve(in.numel());
  for (const auto& img : imgs) {
    if (img.width != kInputSize || img.height != kInputSize || img.data.size() != plane * 3)
      throw ContractError("backbone input must be 224x224x3, got " + std::to_string(img.width) + "x" +
                          std::to_string(img.height));
    for (float v : img.data)
      if (!(v >= 0.0f && v <= 255.0f)) throw ContractError("backbone input values must lie in [0,255]");
    in.data.insert(in.data.end(), img.data.begin(), img.data.end());
  }
  auto out = onnxrt::run(impl_->graph, std::move(in), *kernels_);
  const auto& maps = out[impl_->maps_index];
  const auto& pooled = out[impl_->pooled_index];
  const std::size_t map_len = static_cast<std::size_t>(kFeatureDim) * kMapSize * kMapSize;
  std::vector<BackboneOutput> result(imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    auto& r = result[i];
    r.maps.branch = imgs[i].space;
    r.maps.channels = kFeatureDim;
    r.maps.height = kMapSize;
    r.maps.width = kMapSize;
    r.maps.data.assign(maps.data.begin() + i * map_len, maps.data.begin() + (i + 1) * map_len);
    r.pooled.branch = imgs[i].space;
    r.pooled.values.assign(pooled.data.begin() + i * kFeatureDim, pooled.data.begin() + (i + 1) * kFeatureDim);
    for (float v : r.pooled.values)
      if (!std::isfinite(v)) throw NumericError("backbone produced a non-finite feature");
  }
  return result;
}

BackboneOutput Backbone::extract_maps(const ImageTensor& img) const {
  return std::move(extract_batch(std::span(&img, 1))[0]);
}

FeatureVector Backbone::extract(const ImageTensor& img) const { return extract_maps(img).pooled; }

}  // namespace mcfuse
