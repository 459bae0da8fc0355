#include <algorithm>
#include <cmath>

#include "mcfuse/simd/kernels.hpp"

namespace mcfuse::simd {
namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = a[i * lda + p];
      const float* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_stride2(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[2 * i];
}

float dot(std::size_t n, const float* x, const float* y) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum(std::size_t n, const float* x) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void scale(std::size_t n, float s, float* x) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= s;
}

void add(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void mul(std::size_t n, const float* a, const float* b, float* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void sigmoid(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void silu(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] / (1.0f + std::exp(-x[i]));
}

void relu(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::max(x[i], 0.0f);
}

void minmax(std::size_t n, const float* x, float* lo, float* hi) {
  float a = x[0], b = x[0];
  for (std::size_t i = 1; i < n; ++i) {
    a = std::min(a, x[i]);
    b = std::max(b, x[i]);
  }
  *lo = a;
  *hi = b;
}

void rescale_round(std::size_t n, float lo, float hi, const float* x, float* y) {
  const double l = lo, range = static_cast<double>(hi) - l;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(x[i]) - l) / range * 255.0;
    y[i] = static_cast<float>(std::floor(t + 0.5));
  }
}

void mat3(std::size_t n, const double* m, const double* offset, double s, const float* in0,
          const float* in1, const float* in2, float* out0, float* out1, float* out2) {
  for (std::size_t i = 0; i < n; ++i) {
    const double a = in0[i] * s, b = in1[i] * s, c = in2[i] * s;
    out0[i] = static_cast<float>(m[0] * a + m[1] * b + m[2] * c + offset[0]);
    out1[i] = static_cast<float>(m[3] * a + m[4] * b + m[5] * c + offset[1]);
    out2[i] = static_cast<float>(m[6] * a + m[7] * b + m[8] * c + offset[2]);
  }
}

double dot64(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy64(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sqdist64(std::size_t n, const double* x, const double* y) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

}  // namespace

const Kernels& scalar_kernels() noexcept {
  static const Kernels k{Isa::scalar, "scalar", gemm,    axpy,   axpy_stride2, dot,     sum,
                         scale,       add,      mul,     sigmoid, silu,        relu,    minmax,
                         rescale_round, mat3,   dot64,   axpy64, sqdist64};
  return k;
}

}  // namespace mcfuse::simd
