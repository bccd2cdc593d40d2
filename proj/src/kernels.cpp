#include "aim/kernels.hpp"

#include <cstdlib>

namespace aim::kern {

namespace {

double sc_dot(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

void sc_axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void sc_vadd(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sc_vsub(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void sc_vmul(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void sc_vscale(float a, const float* x, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

double sc_sum(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

float sc_max(const float* x, std::size_t n) {
  float m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

const Ops kScalar = {sc_dot, sc_axpy, sc_vadd, sc_vsub, sc_vmul,
                     sc_vscale, sc_sum, sc_max, "scalar"};

const Ops& select() {
  if (const char* f = std::getenv("AIM_FORCE_SCALAR"); f && f[0] == '1')
    return kScalar;
  if (const Ops* v = avx2_ops()) return *v;
  return kScalar;
}

}  // namespace

const Ops& scalar_ops() { return kScalar; }

#ifndef AIM_BUILD_AVX2
const Ops* avx2_ops() { return nullptr; }
#endif

const Ops& active() {
  static const Ops& ops = select();
  return ops;
}

}  // namespace aim::kern
