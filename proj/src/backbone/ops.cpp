#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "backbone/graph.hpp"
#include "mcfuse/error.hpp"

namespace mcfuse::onnxrt {
namespace {

using Shape = std::vector<std::int64_t>;

std::string describe(const Node& n) { return n.op + " (" + n.name + ")"; }

const Tensor& arg(const std::vector<const Tensor*>& in, std::size_t i, const Node& n) {
  if (i >= in.size() || !in[i]) throw ContractError(describe(n) + ": missing input " + std::to_string(i));
  if (in[i]->is_int) throw ContractError(describe(n) + ": expected a float input");
  return *in[i];
}

Tensor make(Shape shape, float fill = 0.0f) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(t.numel(), fill);
  return t;
}

// ---- elementwise with numpy broadcasting --------------------------------

enum class Bin { add, sub, mul, div };

inline float apply(Bin op, float a, float b) {
  switch (op) {
    case Bin::add: return a + b;
    case Bin::sub: return a - b;
    case Bin::mul: return a * b;
    case Bin::div: return a / b;
  }
  return 0;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const Node& n) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) throw ContractError(describe(n) + ": shapes do not broadcast");
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` aligned to an output of rank r, 0 along broadcast axes.
std::vector<std::size_t> bstrides(const Shape& s, const Shape& out) {
  const std::size_t r = out.size(), off = r - s.size();
  std::vector<std::size_t> st(r, 0);
  std::size_t acc = 1;
  for (std::size_t i = r; i-- > off;) {
    const auto d = s[i - off];
    st[i] = d == 1 ? 0 : acc;
    acc *= static_cast<std::size_t>(d);
  }
  return st;
}

// Per-plane scalar: `small` is [.., C, 1, 1] against a rank-4 `big`.
bool per_plane(const Shape& big, const Shape& small) {
  if (big.size() != 4 || small.empty() || small.size() > 4) return false;
  Shape s(4 - small.size(), 1);
  s.insert(s.end(), small.begin(), small.end());
  return s[2] == 1 && s[3] == 1 && (s[1] == big[1] || s[1] == 1) && (s[0] == big[0] || s[0] == 1);
}

Tensor binary(Bin op, const Tensor& a, const Tensor& b, const Node& n, const simd::Kernels& k) {
  const Shape out_shape = broadcast_shape(a.shape, b.shape, n);
  Tensor out = make(out_shape);
  const std::size_t total = out.numel();
  if (a.shape == b.shape) {
    if (op == Bin::mul) {
      k.mul_f32(total, a.data.data(), b.data.data(), out.data.data());
    } else if (op == Bin::add) {
      std::copy(a.data.begin(), a.data.end(), out.data.begin());
      k.add_f32(total, b.data.data(), out.data.data());
    } else {
      for (std::size_t i = 0; i < total; ++i) out.data[i] = apply(op, a.data[i], b.data[i]);
    }
    return out;
  }
  const bool a_big = a.shape == out_shape, b_big = b.shape == out_shape;
  if ((a_big && b.numel() == 1) || (b_big && a.numel() == 1)) {
    for (std::size_t i = 0; i < total; ++i)
      out.data[i] = a_big ? apply(op, a.data[i], b.data[0]) : apply(op, a.data[0], b.data[i]);
    return out;
  }
  if ((a_big && per_plane(out_shape, b.shape)) || (b_big && per_plane(out_shape, a.shape))) {
    const Tensor& small = a_big ? b : a;
    const auto st = bstrides(small.shape, out_shape);
    const std::size_t plane = static_cast<std::size_t>(out_shape[2] * out_shape[3]);
    for (std::int64_t i = 0; i < out_shape[0]; ++i)
      for (std::int64_t c = 0; c < out_shape[1]; ++c) {
        const float s = small.data[i * st[0] + c * st[1]];
        const std::size_t base = (static_cast<std::size_t>(i) * out_shape[1] + c) * plane;
        float* o = out.data.data() + base;
        if (a_big) {
          const float* x = a.data.data() + base;
          if (op == Bin::mul) {
            for (std::size_t j = 0; j < plane; ++j) o[j] = x[j] * s;
          } else {
            for (std::size_t j = 0; j < plane; ++j) o[j] = apply(op, x[j], s);
          }
        } else {
          const float* x = b.data.data() + base;
          for (std::size_t j = 0; j < plane; ++j) o[j] = apply(op, s, x[j]);
        }
      }
    return out;
  }
  const auto sa = bstrides(a.shape, out_shape), sb = bstrides(b.shape, out_shape);
  const std::size_t r = out_shape.size();
  std::vector<std::int64_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    out.data[i] = apply(op, a.data[ia], b.data[ib]);
    for (std::size_t d = r; d-- > 0;) {
      ia += sa[d];
      ib += sb[d];
      if (++idx[d] < out_shape[d]) break;
      ia -= sa[d] * static_cast<std::size_t>(out_shape[d]);
      ib -= sb[d] * static_cast<std::size_t>(out_shape[d]);
      idx[d] = 0;
    }
  }
  return out;
}

// ---- convolution ---------------------------------------------------------

struct ConvGeom {
  std::int64_t n, c, h, w;      // input
  std::int64_t m, kh, kw;       // filters
  std::int64_t group, cg, mg;   // per-group channel counts
  std::int64_t sh, sw, dh, dw;  // strides, dilations
  std::int64_t pt, pl, pb, pr;  // pads
  std::int64_t oh, ow;
};

ConvGeom conv_geometry(const Node& node, const Tensor& x, const Tensor& w) {
  if (x.shape.size() != 4 || w.shape.size() != 4)
    throw ContractError(describe(node) + ": only 2-D convolution is supported");
  const std::string pad_mode = node.has("auto_pad") ? node.attrs.at("auto_pad").s : "NOTSET";
  if (pad_mode != "NOTSET" && pad_mode != "VALID")
    throw ContractError(describe(node) + ": auto_pad " + pad_mode + " is not supported");
  ConvGeom g{};
  g.n = x.shape[0];
  g.c = x.shape[1];
  g.h = x.shape[2];
  g.w = x.shape[3];
  g.m = w.shape[0];
  g.kh = w.shape[2];
  g.kw = w.shape[3];
  g.group = node.attr_i("group", 1);
  if (g.group < 1 || g.c % g.group || g.m % g.group || w.shape[1] != g.c / g.group)
    throw ContractError(describe(node) + ": channel/group mismatch");
  g.cg = g.c / g.group;
  g.mg = g.m / g.group;
  const auto ks = node.attr_ints("kernel_shape", {g.kh, g.kw});
  if (ks.size() != 2 || ks[0] != g.kh || ks[1] != g.kw)
    throw ContractError(describe(node) + ": kernel_shape disagrees with weights");
  const auto st = node.attr_ints("strides", {1, 1});
  const auto dl = node.attr_ints("dilations", {1, 1});
  const auto pd = pad_mode == "VALID" ? std::vector<std::int64_t>{0, 0, 0, 0}
                                      : node.attr_ints("pads", {0, 0, 0, 0});
  if (st.size() != 2 || dl.size() != 2 || pd.size() != 4)
    throw ContractError(describe(node) + ": malformed strides/dilations/pads");
  g.sh = st[0];
  g.sw = st[1];
  g.dh = dl[0];
  g.dw = dl[1];
  g.pt = pd[0];
  g.pl = pd[1];
  g.pb = pd[2];
  g.pr = pd[3];
  g.oh = (g.h + g.pt + g.pb - g.dh * (g.kh - 1) - 1) / g.sh + 1;
  g.ow = (g.w + g.pl + g.pr - g.dw * (g.kw - 1) - 1) / g.sw + 1;
  if (g.oh < 1 || g.ow < 1) throw ContractError(describe(node) + ": empty output");
  return g;
}

void depthwise(const ConvGeom& g, const float* x, const float* w, float* y, const simd::Kernels& k) {
  const std::int64_t hp = g.h + g.pt + g.pb, wp = g.w + g.pl + g.pr;
  // Trailing slack covers the stride-2 kernel reading one element past a row.
  std::vector<float> pad(static_cast<std::size_t>(hp * wp) + 16);
  for (std::int64_t c = 0; c < g.c; ++c) {
    std::fill(pad.begin(), pad.end(), 0.0f);
    const float* xp = x + c * g.h * g.w;
    for (std::int64_t r = 0; r < g.h; ++r)
      std::copy(xp + r * g.w, xp + (r + 1) * g.w, pad.data() + (r + g.pt) * wp + g.pl);
    const float* wc = w + c * g.kh * g.kw;
    float* yc = y + c * g.oh * g.ow;
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      float* orow = yc + oy * g.ow;
      for (std::int64_t ky = 0; ky < g.kh; ++ky) {
        const float* prow = pad.data() + (oy * g.sh + ky * g.dh) * wp;
        for (std::int64_t kx = 0; kx < g.kw; ++kx) {
          const float wv = wc[ky * g.kw + kx];
          const float* src = prow + kx * g.dw;
          if (g.sw == 1) {
            k.axpy_f32(static_cast<std::size_t>(g.ow), wv, src, orow);
          } else if (g.sw == 2) {
            k.axpy_stride2_f32(static_cast<std::size_t>(g.ow), wv, src, orow);
          } else {
            for (std::int64_t ox = 0; ox < g.ow; ++ox) orow[ox] += wv * src[ox * g.sw];
          }
        }
      }
    }
  }
}

void im2col(const ConvGeom& g, const float* x, std::int64_t c0, float* col) {
  const std::int64_t ohw = g.oh * g.ow;
  for (std::int64_t c = 0; c < g.cg; ++c) {
    const float* xp = x + (c0 + c) * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.kh; ++ky)
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        float* dst = col + ((c * g.kh + ky) * g.kw + kx) * ohw;
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.sh - g.pt + ky * g.dh;
          float* d = dst + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(d, d + g.ow, 0.0f);
            continue;
          }
          const float* row = xp + iy * g.w;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.sw - g.pl + kx * g.dw;
            d[ox] = (ix >= 0 && ix < g.w) ? row[ix] : 0.0f;
          }
        }
      }
  }
}

Tensor conv(const Node& node, const std::vector<const Tensor*>& in, const simd::Kernels& k) {
  const Tensor& x = arg(in, 0, node);
  const Tensor& w = arg(in, 1, node);
  const Tensor* b = in.size() > 2 ? in[2] : nullptr;
  const ConvGeom g = conv_geometry(node, x, w);
  if (b && b->numel() != static_cast<std::size_t>(g.m)) throw ContractError(describe(node) + ": bias size");
  Tensor y = make({g.n, g.m, g.oh, g.ow});
  const std::int64_t ohw = g.oh * g.ow;
  for (std::int64_t i = 0; i < g.n; ++i) {
    float* yi = y.data.data() + i * g.m * ohw;
    if (b)
      for (std::int64_t m = 0; m < g.m; ++m) std::fill(yi + m * ohw, yi + (m + 1) * ohw, b->data[m]);
  }
  const bool is_depthwise = g.cg == 1 && g.mg == 1;
  const bool pointwise = g.kh == 1 && g.kw == 1 && g.sh == 1 && g.sw == 1 && g.pt == 0 && g.pl == 0 &&
                         g.pb == 0 && g.pr == 0;
  const std::int64_t kdim = g.cg * g.kh * g.kw;
  std::vector<float> col;
  if (!is_depthwise && !pointwise) col.resize(static_cast<std::size_t>(kdim * ohw));
  for (std::int64_t i = 0; i < g.n; ++i) {
    const float* xi = x.data.data() + i * g.c * g.h * g.w;
    float* yi = y.data.data() + i * g.m * ohw;
    if (is_depthwise) {
      depthwise(g, xi, w.data.data(), yi, k);
      continue;
    }
    for (std::int64_t gr = 0; gr < g.group; ++gr) {
      const float* bmat;
      if (pointwise) {
        bmat = xi + gr * g.cg * g.h * g.w;
      } else {
        im2col(g, xi, gr * g.cg, col.data());
        bmat = col.data();
      }
      k.gemm_f32(static_cast<std::size_t>(g.mg), static_cast<std::size_t>(ohw), static_cast<std::size_t>(kdim),
                 w.data.data() + gr * g.mg * kdim, static_cast<std::size_t>(kdim), bmat,
                 static_cast<std::size_t>(ohw), yi + gr * g.mg * ohw, static_cast<std::size_t>(ohw));
    }
  }
  return y;
}

// ---- the rest ------------------------------------------------------------

Tensor global_avg_pool(const Node& node, const Tensor& x, const simd::Kernels& k) {
  if (x.shape.size() < 3) throw ContractError(describe(node) + ": needs N,C,spatial...");
  Shape out_shape = {x.shape[0], x.shape[1]};
  std::size_t plane = 1;
  for (std::size_t d = 2; d < x.shape.size(); ++d) {
    plane *= static_cast<std::size_t>(x.shape[d]);
    out_shape.push_back(1);
  }
  Tensor y = make(out_shape);
  for (std::size_t p = 0; p < y.data.size(); ++p)
    y.data[p] = static_cast<float>(k.sum_f32(plane, x.data.data() + p * plane) / static_cast<double>(plane));
  return y;
}

Tensor flatten(const Node& node, const Tensor& x) {
  std::int64_t axis = node.attr_i("axis", 1);
  const auto r = static_cast<std::int64_t>(x.shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis > r) throw ContractError(describe(node) + ": bad axis");
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t d = 0; d < r; ++d) (d < axis ? outer : inner) *= x.shape[d];
  Tensor y = x;
  y.shape = {outer, inner};
  return y;
}

Tensor reshape(const Node& node, const std::vector<const Tensor*>& in) {
  const Tensor& x = arg(in, 0, node);
  if (in.size() < 2 || !in[1] || !in[1]->is_int) throw ContractError(describe(node) + ": shape must be int64");
  Shape shape = in[1]->ints;
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      if (i >= x.shape.size()) throw ContractError(describe(node) + ": 0 beyond input rank");
      shape[i] = x.shape[i];
    }
    if (shape[i] == -1) {
      if (infer >= 0) throw ContractError(describe(node) + ": more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[infer] = static_cast<std::int64_t>(x.numel()) / std::max<std::int64_t>(known, 1);
  if (numel(shape) != x.numel()) throw ContractError(describe(node) + ": element count changes");
  Tensor y = x;
  y.shape = shape;
  return y;
}

Tensor reduce_mean(const Node& node, const std::vector<const Tensor*>& in) {
  const Tensor& x = arg(in, 0, node);
  const auto r = static_cast<std::int64_t>(x.shape.size());
  Shape axes = node.attr_ints("axes", {});
  if (in.size() > 1 && in[1]) axes = in[1]->ints;
  if (axes.empty())
    for (std::int64_t d = 0; d < r; ++d) axes.push_back(d);
  std::vector<bool> reduced(r, false);
  for (auto a : axes) reduced[a < 0 ? a + r : a] = true;
  const bool keep = node.attr_i("keepdims", 1) != 0;
  Shape kept_shape(r);
  for (std::int64_t d = 0; d < r; ++d) kept_shape[d] = reduced[d] ? 1 : x.shape[d];
  std::vector<double> acc(numel(kept_shape), 0.0);
  const auto st = bstrides(kept_shape, x.shape);
  std::vector<std::int64_t> idx(r, 0);
  std::size_t o = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    acc[o] += x.data[i];
    for (std::int64_t d = r; d-- > 0;) {
      o += st[d];
      if (++idx[d] < x.shape[d]) break;
      o -= st[d] * static_cast<std::size_t>(x.shape[d]);
      idx[d] = 0;
    }
  }
  const double count = static_cast<double>(x.numel()) / static_cast<double>(acc.size());
  Shape out_shape;
  for (std::int64_t d = 0; d < r; ++d)
    if (!reduced[d] || keep) out_shape.push_back(kept_shape[d]);
  Tensor y = make(out_shape);
  for (std::size_t i = 0; i < acc.size(); ++i) y.data[i] = static_cast<float>(acc[i] / count);
  return y;
}

Tensor batch_norm(const Node& node, const std::vector<const Tensor*>& in) {
  const Tensor& x = arg(in, 0, node);
  const Tensor& scale = arg(in, 1, node);
  const Tensor& bias = arg(in, 2, node);
  const Tensor& mean = arg(in, 3, node);
  const Tensor& var = arg(in, 4, node);
  const float eps = node.attr_f("epsilon", 1e-5f);
  if (x.shape.size() < 2) throw ContractError(describe(node) + ": rank < 2");
  const std::int64_t c = x.shape[1];
  if (scale.numel() != static_cast<std::size_t>(c)) throw ContractError(describe(node) + ": channel count");
  std::size_t plane = 1;
  for (std::size_t d = 2; d < x.shape.size(); ++d) plane *= static_cast<std::size_t>(x.shape[d]);
  Tensor y = x;
  for (std::int64_t i = 0; i < x.shape[0]; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float a = scale.data[ch] / std::sqrt(var.data[ch] + eps);
      const float s = bias.data[ch] - mean.data[ch] * a;
      float* p = y.data.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] = p[j] * a + s;
    }
  return y;
}

Tensor gemm(const Node& node, const std::vector<const Tensor*>& in, const simd::Kernels& k) {
  const Tensor& a0 = arg(in, 0, node);
  const Tensor& b0 = arg(in, 1, node);
  const Tensor* c = in.size() > 2 ? in[2] : nullptr;
  if (a0.shape.size() != 2 || b0.shape.size() != 2) throw ContractError(describe(node) + ": rank-2 inputs");
  auto transpose = [](const Tensor& t) {
    Tensor r = make({t.shape[1], t.shape[0]});
    for (std::int64_t i = 0; i < t.shape[0]; ++i)
      for (std::int64_t j = 0; j < t.shape[1]; ++j) r.data[j * t.shape[0] + i] = t.data[i * t.shape[1] + j];
    return r;
  };
  const Tensor a = node.attr_i("transA", 0) ? transpose(a0) : a0;
  const Tensor b = node.attr_i("transB", 0) ? transpose(b0) : b0;
  const std::int64_t m = a.shape[0], kk = a.shape[1], n = b.shape[1];
  if (b.shape[0] != kk) throw ContractError(describe(node) + ": inner dimensions differ");
  const float alpha = node.attr_f("alpha", 1.0f), beta = node.attr_f("beta", 1.0f);
  Tensor y = make({m, n});
  k.gemm_f32(static_cast<std::size_t>(m), static_cast<std::size_t>(n), static_cast<std::size_t>(kk),
             a.data.data(), static_cast<std::size_t>(kk), b.data.data(), static_cast<std::size_t>(n),
             y.data.data(), static_cast<std::size_t>(n));
  if (alpha != 1.0f) k.scale_f32(y.data.size(), alpha, y.data.data());
  if (c) {
    if (broadcast_shape(y.shape, c->shape, node) != y.shape)
      throw ContractError(describe(node) + ": C does not broadcast to the output");
    const auto st = bstrides(c->shape, y.shape);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) y.data[i * n + j] += beta * c->data[i * st[0] + j * st[1]];
  }
  return y;
}

}  // namespace

Tensor run_node(const Node& node, const std::vector<const Tensor*>& in, const simd::Kernels& k) {
  const std::string& op = node.op;
  if (op == "Conv") return conv(node, in, k);
  if (op == "SiLU" || op == "Sigmoid" || op == "Relu") {
    const Tensor& x = arg(in, 0, node);
    Tensor y = make(x.shape);
    auto fn = op == "SiLU" ? k.silu_f32 : op == "Sigmoid" ? k.sigmoid_f32 : k.relu_f32;
    fn(x.numel(), x.data.data(), y.data.data());
    return y;
  }
  if (op == "Add") return binary(Bin::add, arg(in, 0, node), arg(in, 1, node), node, k);
  if (op == "Sub") return binary(Bin::sub, arg(in, 0, node), arg(in, 1, node), node, k);
  if (op == "Mul") return binary(Bin::mul, arg(in, 0, node), arg(in, 1, node), node, k);
  if (op == "Div") return binary(Bin::div, arg(in, 0, node), arg(in, 1, node), node, k);
  if (op == "GlobalAveragePool") return global_avg_pool(node, arg(in, 0, node), k);
  if (op == "Flatten") return flatten(node, arg(in, 0, node));
  if (op == "Reshape") return reshape(node, in);
  if (op == "ReduceMean") return reduce_mean(node, in);
  if (op == "BatchNormalization") return batch_norm(node, in);
  if (op == "Gemm") return gemm(node, in, k);
  if (op == "Clip") {
    const Tensor& x = arg(in, 0, node);
    float lo = node.attr_f("min", -std::numeric_limits<float>::infinity());
    float hi = node.attr_f("max", std::numeric_limits<float>::infinity());
    if (in.size() > 1 && in[1]) lo = in[1]->data.at(0);
    if (in.size() > 2 && in[2]) hi = in[2]->data.at(0);
    Tensor y = x;
    for (float& v : y.data) v = std::clamp(v, lo, hi);
    return y;
  }
  throw ContractError("unsupported operator " + describe(node));
}

}  // namespace mcfuse::onnxrt
