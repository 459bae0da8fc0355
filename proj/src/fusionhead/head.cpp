#include <algorithm>
#include <cmath>
#include <string>

#include "mcfuse/error.hpp"
#include "mcfuse/fusionhead.hpp"

namespace mcfuse {

std::string_view label_name(int label) {
  switch (label) {
    case 0: return "GAN";
    case 1: return "Graphics";
    case 2: return "Real";
    default: return "?";
  }
}

std::optional<int> parse_label(std::string_view name) {
  for (int c = 0; c < kNumClasses; ++c)
    if (name == label_name(c)) return c;
  if (name.size() == 1 && name[0] >= '0' && name[0] <= '2') return name[0] - '0';
  return std::nullopt;
}

FusedFeature concat_features(const FeatureVector& rgb, const FeatureVector& lch, const FeatureVector& hsv) {
  if (rgb.branch != ColorspaceId::RGB || lch.branch != ColorspaceId::LCH || hsv.branch != ColorspaceId::HSV)
    throw ContractError("concat_features expects branches in the order RGB, LCH, HSV");
  if (rgb.image_id != lch.image_id || rgb.image_id != hsv.image_id)
    throw ContractError("concat_features: image ids differ");
  if (rgb.values.size() != kFeatureDim || lch.values.size() != kFeatureDim || hsv.values.size() != kFeatureDim)
    throw ContractError("concat_features: each branch feature must have 1280 values");
  FusedFeature f;
  f.image_id = rgb.image_id;
  f.values.reserve(3 * kFeatureDim);
  for (const auto* v : {&rgb, &lch, &hsv}) f.values.insert(f.values.end(), v->values.begin(), v->values.end());
  return f;
}

HeadModel HeadModel::zeros(int dim) {
  if (dim < 1) throw ContractError("head dimension must be >= 1");
  HeadModel m;
  m.dim = dim;
  m.weights.assign(static_cast<std::size_t>(kNumClasses) * dim, 0.0f);
  return m;
}

std::size_t param_count(const HeadModel& m) { return static_cast<std::size_t>(kNumClasses) * m.dim + kNumClasses; }

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::array<double, kNumClasses> p{};
  double s = 0;
  for (int c = 0; c < kNumClasses; ++c) s += p[c] = std::exp(z[c] - mx);
  for (double& v : p) v /= s;
  return p;
}

int argmax(const std::array<double, kNumClasses>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Prediction predict(const HeadModel& m, std::span<const float> x) {
  if (x.size() != static_cast<std::size_t>(m.dim))
    throw ContractError("predict: feature length " + std::to_string(x.size()) + " != head dimension " +
                        std::to_string(m.dim));
  Prediction p;
  for (int c = 0; c < kNumClasses; ++c) {
    const float* w = m.row(c);
    double s = m.bias[c];
    for (int j = 0; j < m.dim; ++j) s += static_cast<double>(w[j]) * x[j];
    p.logits[c] = s;
  }
  p.probs = softmax(p.logits);
  p.label = argmax(p.logits);
  return p;
}

SetMetrics evaluate_loss(const HeadModel& m, std::span<const FusedFeature> set) {
  SetMetrics r;
  if (set.empty()) return r;
  std::size_t correct = 0;
  for (const auto& f : set) {
    const Prediction p = predict(m, f.values);
    if (f.label < 0 || f.label >= kNumClasses) throw ContractError("label out of range");
    const double mx = *std::max_element(p.logits.begin(), p.logits.end());
    double s = 0;
    for (double z : p.logits) s += std::exp(z - mx);
    r.loss += mx + std::log(s) - p.logits[f.label];
    correct += p.label == f.label;
  }
  r.loss /= static_cast<double>(set.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return r;
}

}  // namespace mcfuse
