#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aim/error.hpp"

namespace aim {

// Dense row-major f32 tensor. Most ops in the graph treat tensors as 2-D
// (rows x cols); a rank-1 tensor behaves as a single row.
struct Tensor {
  std::vector<int> dims;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<int> d, std::vector<float> v);

  static Tensor zeros(std::vector<int> dims);
  static Tensor full(std::vector<int> dims, float value);
  static Tensor row(std::vector<float> v);  // 1 x n

  std::int64_t numel() const;
  int rows() const;
  int cols() const;
  float& at(int r, int c);
  const float& at(int r, int c) const;
  bool same_shape(const Tensor& other) const;
  std::string shape_str() const;
  bool all_finite() const;
};

// C (MxN) = A (MxK) * B (KxN), overwriting C.
void matmul(const float* a, int m, int k, const float* b, int n, float* c);
// C (MxN) += A (MxK) * B^T where B is (NxK).
void matmul_abt_acc(const float* a, int m, int k, const float* b, int n, float* c);
// C (KxN) += A^T * B where A is (MxK), B is (MxN).
void matmul_atb_acc(const float* a, int m, int k, const float* b, int n, float* c);

}  // namespace aim
