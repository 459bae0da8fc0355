#include <cstring>
#include <fstream>
#include <set>
#include <unordered_map>

#include "backbone/graph.hpp"
#include "mcfuse/error.hpp"
#include "onnx_subset.pb.h"

namespace mcfuse::onnxrt {
namespace {

template <class T>
void copy_raw(const std::string& raw, std::vector<T>& out, std::size_t n, const std::string& name) {
  if (raw.size() != n * sizeof(T)) throw LoadError("initializer " + name + ": raw_data size mismatch");
  out.resize(n);
  std::memcpy(out.data(), raw.data(), raw.size());
}

std::shared_ptr<Tensor> convert(const onnx::TensorProto& tp) {
  const std::string name = tp.name();
  if (tp.data_location() == onnx::TensorProto::EXTERNAL)
    throw LoadError("initializer " + name + ": external data is not supported");
  auto t = std::make_shared<Tensor>();
  t->shape.assign(tp.dims().begin(), tp.dims().end());
  for (auto d : t->shape)
    if (d < 0) throw LoadError("initializer " + name + ": negative dimension");
  const std::size_t n = t->numel();
  switch (tp.data_type()) {
    case onnx::TensorProto::FLOAT:
      if (tp.has_raw_data()) copy_raw(tp.raw_data(), t->data, n, name);
      else t->data.assign(tp.float_data().begin(), tp.float_data().end());
      if (t->data.size() != n) throw LoadError("initializer " + name + ": element count mismatch");
      break;
    case onnx::TensorProto::DOUBLE: {
      std::vector<double> d;
      if (tp.has_raw_data()) copy_raw(tp.raw_data(), d, n, name);
      else d.assign(tp.double_data().begin(), tp.double_data().end());
      t->data.assign(d.begin(), d.end());
      if (t->data.size() != n) throw LoadError("initializer " + name + ": element count mismatch");
      break;
    }
    case onnx::TensorProto::INT64:
      t->is_int = true;
      if (tp.has_raw_data()) copy_raw(tp.raw_data(), t->ints, n, name);
      else t->ints.assign(tp.int64_data().begin(), tp.int64_data().end());
      if (t->ints.size() != n) throw LoadError("initializer " + name + ": element count mismatch");
      break;
    case onnx::TensorProto::INT32: {
      t->is_int = true;
      std::vector<std::int32_t> v;
      if (tp.has_raw_data()) copy_raw(tp.raw_data(), v, n, name);
      else v.assign(tp.int32_data().begin(), tp.int32_data().end());
      t->ints.assign(v.begin(), v.end());
      if (t->ints.size() != n) throw LoadError("initializer " + name + ": element count mismatch");
      break;
    }
    default:
      throw LoadError("initializer " + name + ": unsupported data type " + std::to_string(tp.data_type()));
  }
  return t;
}

std::vector<std::int64_t> static_shape(const onnx::ValueInfoProto& vi) {
  std::vector<std::int64_t> shape;
  if (!vi.has_type() || !vi.type().has_tensor_type()) return shape;
  for (const auto& d : vi.type().tensor_type().shape().dim())
    shape.push_back(d.has_dim_value() ? d.dim_value() : -1);
  return shape;
}

}  // namespace

bool supported_op(const std::string& op) {
  static const std::set<std::string> ops = {
      "Conv", "Sigmoid", "Mul", "Add", "Sub", "Div", "Identity", "GlobalAveragePool", "Flatten",
      "Relu", "Clip", "BatchNormalization", "Reshape", "ReduceMean", "Constant", "Gemm", "SiLU"};
  return ops.count(op) != 0;
}

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file " + path.string());
  onnx::ModelProto model;
  if (!model.ParseFromIstream(&in)) throw LoadError(path.string() + ": not an ONNX model file");
  if (!model.has_graph()) throw LoadError(path.string() + ": model has no graph");

  Graph g;
  for (const auto& os : model.opset_import())
    if (os.domain().empty() || os.domain() == "ai.onnx") g.opset = os.version();

  std::unordered_map<std::string, int> ids;
  auto id_of = [&](const std::string& name) {
    auto [it, fresh] = ids.emplace(name, static_cast<int>(g.value_names.size()));
    if (fresh) {
      g.value_names.push_back(name);
      g.constants.emplace_back();
    }
    return it->second;
  };

  const auto& gp = model.graph();
  for (const auto& init : gp.initializer()) g.constants[id_of(init.name())] = convert(init);

  for (const auto& vi : gp.input()) {
    const int id = id_of(vi.name());
    if (g.constants[id]) continue;  // older exporters list initializers as inputs
    if (g.input >= 0) throw LoadError("model has more than one runtime input");
    g.input = id;
    g.input_name = vi.name();
    g.input_shape = static_shape(vi);
  }
  if (g.input < 0) throw LoadError("model has no runtime input");

  std::vector<bool> defined(g.value_names.size(), false);
  auto mark = [&](int id) {
    if (static_cast<std::size_t>(id) >= defined.size()) defined.resize(id + 1, false);
    defined[id] = true;
  };
  mark(g.input);
  for (std::size_t i = 0; i < g.constants.size(); ++i)
    if (g.constants[i]) mark(static_cast<int>(i));

  std::unordered_map<int, int> alias;  // Identity output -> source
  auto resolve = [&](int id) {
    while (alias.count(id)) id = alias[id];
    return id;
  };

  for (const auto& np : gp.node()) {
    if (!np.domain().empty() && np.domain() != "ai.onnx")
      throw LoadError("operator domain '" + np.domain() + "' is not supported (" + np.op_type() + ")");
    if (!supported_op(np.op_type()) || np.op_type() == "SiLU")
      throw LoadError("unsupported operator " + np.op_type() + " in node " + np.name());
    if (np.output_size() != 1)
      throw LoadError(np.op_type() + " node " + np.name() + ": exactly one output is supported");
    Node node;
    node.op = np.op_type();
    node.name = np.name();
    for (const auto& name : np.input()) {
      if (name.empty()) {
        node.in.push_back(-1);
        continue;
      }
      const int id = resolve(id_of(name));
      if (static_cast<std::size_t>(id) >= defined.size() || !defined[id])
        throw LoadError("node " + np.name() + " reads '" + name + "' before it is produced");
      node.in.push_back(id);
    }
    for (const auto& a : np.attribute()) {
      Attr attr;
      attr.i = a.i();
      attr.f = a.f();
      attr.s = a.s();
      attr.ints.assign(a.ints().begin(), a.ints().end());
      attr.floats.assign(a.floats().begin(), a.floats().end());
      if (a.has_t()) attr.t = convert(a.t());
      node.attrs.emplace(a.name(), std::move(attr));
    }
    const int out = id_of(np.output(0));
    mark(out);
    if (node.op == "Identity") {
      if (node.in.empty() || node.in[0] < 0) throw LoadError("Identity without input");
      alias[out] = node.in[0];
      continue;
    }
    if (node.op == "Constant") {
      auto it = node.attrs.find("value");
      if (it == node.attrs.end() || !it->second.t) throw LoadError("Constant node without tensor value");
      g.constants[out] = it->second.t;
      continue;
    }
    node.out = out;
    g.nodes.push_back(std::move(node));
  }

  for (const auto& vi : gp.output()) {
    auto it = ids.find(vi.name());
    if (it == ids.end() || static_cast<std::size_t>(it->second) >= defined.size() || !defined[it->second]) throw LoadError("graph output " + vi.name() + " is never produced");
    g.outputs.push_back(resolve(it->second));
    g.output_names.push_back(vi.name());
  }

  // Fuse Mul(x, Sigmoid(x)) into SiLU(x) when the sigmoid has no other reader.
  std::vector<int> readers(g.value_names.size(), 0);
  std::vector<int> producer(g.value_names.size(), -1);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    producer[g.nodes[i].out] = static_cast<int>(i);
    for (int v : g.nodes[i].in)
      if (v >= 0) ++readers[v];
  }
  for (int v : g.outputs) ++readers[v];
  std::vector<bool> dead(g.nodes.size(), false);
  for (auto& node : g.nodes) {
    if (node.op != "Mul" || node.in.size() != 2) continue;
    for (int side = 0; side < 2; ++side) {
      const int s = node.in[side], x = node.in[1 - side];
      const int p = producer[s];
      if (p < 0 || g.nodes[p].op != "Sigmoid" || g.nodes[p].in[0] != x || readers[s] != 1) continue;
      dead[p] = true;
      node.op = "SiLU";
      node.in = {x};
      break;
    }
  }
  std::vector<Node> live;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (!dead[i]) live.push_back(std::move(g.nodes[i]));
  g.nodes = std::move(live);

  // Release each intermediate after its last reader.
  std::vector<int> last(g.value_names.size(), -1);
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    for (int v : g.nodes[i].in)
      if (v >= 0) last[v] = static_cast<int>(i);
  std::set<int> keep(g.outputs.begin(), g.outputs.end());
  g.free_after.assign(g.nodes.size(), {});
  for (std::size_t v = 0; v < last.size(); ++v)
    if (last[v] >= 0 && !g.constants[v] && !keep.count(static_cast<int>(v)))
      g.free_after[last[v]].push_back(static_cast<int>(v));
  return g;
}

std::vector<Tensor> run(const Graph& g, Tensor input, const simd::Kernels& k) {
  std::vector<Tensor> owned(g.value_names.size());
  std::vector<const Tensor*> view(g.value_names.size(), nullptr);
  for (std::size_t i = 0; i < g.constants.size(); ++i)
    if (g.constants[i]) view[i] = g.constants[i].get();
  owned[g.input] = std::move(input);
  view[g.input] = &owned[g.input];

  std::vector<const Tensor*> args;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& node = g.nodes[i];
    args.clear();
    for (int v : node.in) args.push_back(v >= 0 ? view[v] : nullptr);
    owned[node.out] = run_node(node, args, k);
    view[node.out] = &owned[node.out];
    for (int v : g.free_after[i]) {
      owned[v] = Tensor{};
      view[v] = nullptr;
    }
  }
  std::vector<Tensor> outs;
  for (int v : g.outputs) outs.push_back(*view[v]);
  return outs;
}

}  // namespace mcfuse::onnxrt
