#pragma once

#include <cstddef>

namespace aim::kern {

// Hot inner-loop primitives. Reductions accumulate in double, elementwise
// ops stay in float. An AVX2 variant is selected at runtime when the CPU
// supports it; set AIM_FORCE_SCALAR=1 in the environment to pin the scalar
// reference path.
struct Ops {
  double (*dot)(const float* a, const float* b, std::size_t n);
  void (*axpy)(float a, const float* x, float* y, std::size_t n);  // y += a*x
  void (*vadd)(const float* a, const float* b, float* out, std::size_t n);
  void (*vsub)(const float* a, const float* b, float* out, std::size_t n);
  void (*vmul)(const float* a, const float* b, float* out, std::size_t n);
  void (*vscale)(float a, const float* x, float* out, std::size_t n);
  double (*sum)(const float* x, std::size_t n);
  float (*maxval)(const float* x, std::size_t n);
  const char* name;
};

const Ops& scalar_ops();
const Ops* avx2_ops();  // nullptr when not compiled in or CPU lacks AVX2+FMA
const Ops& active();

}  // namespace aim::kern
