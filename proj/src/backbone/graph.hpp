#pragma once

// Minimal ONNX interpreter: enough of the operator set for exported CNN
// feature extractors (EfficientNet/ResNet/MobileNet style graphs), NCHW
// float32 only.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mcfuse/simd/kernels.hpp"

namespace mcfuse::onnxrt {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
  std::vector<std::int64_t> ints;  // populated instead of data for integer tensors
  bool is_int = false;

  std::size_t numel() const;
};

std::size_t numel(const std::vector<std::int64_t>& shape);

struct Attr {
  std::int64_t i = 0;
  float f = 0;
  std::string s;
  std::vector<std::int64_t> ints;
  std::vector<float> floats;
  std::shared_ptr<const Tensor> t;
};

struct Node {
  std::string op;
  std::string name;
  std::vector<int> in;  // value ids, -1 for an omitted optional input
  int out = -1;
  std::map<std::string, Attr, std::less<>> attrs;

  bool has(const std::string& key) const { return attrs.count(key) != 0; }
  std::int64_t attr_i(const std::string& key, std::int64_t fallback) const;
  float attr_f(const std::string& key, float fallback) const;
  std::vector<std::int64_t> attr_ints(const std::string& key, std::vector<std::int64_t> fallback) const;
};

struct Graph {
  std::vector<std::string> value_names;
  std::vector<std::shared_ptr<const Tensor>> constants;  // per value id, null unless initializer
  std::vector<Node> nodes;
  int input = -1;
  std::string input_name;
  std::vector<std::int64_t> input_shape;  // -1 for symbolic dims
  std::vector<int> outputs;
  std::vector<std::string> output_names;
  std::vector<std::vector<int>> free_after;  // per node: values last read by it
  std::int64_t opset = 0;
};

/// Parses and validates a model file; rewrites Identity away and fuses
/// x * sigmoid(x) into one SiLU node. Throws LoadError.
Graph load_graph(const std::filesystem::path& path);

/// Runs the graph on one input tensor and returns the graph outputs in
/// declaration order.
std::vector<Tensor> run(const Graph& g, Tensor input, const simd::Kernels& k);

/// Executes one node; exposed for tests.
Tensor run_node(const Node& node, const std::vector<const Tensor*>& in, const simd::Kernels& k);

bool supported_op(const std::string& op);

}  // namespace mcfuse::onnxrt
