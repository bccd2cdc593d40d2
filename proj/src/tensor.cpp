#include "aim/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "aim/kernels.hpp"

namespace aim {

Tensor::Tensor(std::vector<int> d, std::vector<float> v)
    : dims(std::move(d)), data(std::move(v)) {
  std::int64_t n = 1;
  for (int x : dims) {
    if (x <= 0) throw ShapeError("non-positive tensor dimension");
    n *= x;
  }
  if (n != static_cast<std::int64_t>(data.size()))
    throw ShapeError("tensor data length does not match dims");
}

Tensor Tensor::zeros(std::vector<int> d) {
  std::int64_t n = 1;
  for (int x : d) {
    if (x <= 0) throw ShapeError("non-positive tensor dimension");
    n *= x;
  }
  Tensor t;
  t.dims = std::move(d);
  t.data.assign(static_cast<std::size_t>(n), 0.0f);
  return t;
}

Tensor Tensor::full(std::vector<int> d, float value) {
  Tensor t = zeros(std::move(d));
  for (float& x : t.data) x = value;
  return t;
}

Tensor Tensor::row(std::vector<float> v) {
  Tensor t;
  t.dims = {1, static_cast<int>(v.size())};
  t.data = std::move(v);
  return t;
}

std::int64_t Tensor::numel() const {
  std::int64_t n = 1;
  for (int x : dims) n *= x;
  return n;
}

int Tensor::rows() const {
  if (dims.size() == 1) return 1;
  if (dims.size() == 2) return dims[0];
  throw ShapeError("rows() on tensor of rank " + std::to_string(dims.size()));
}

int Tensor::cols() const {
  if (dims.size() == 1) return dims[0];
  if (dims.size() == 2) return dims[1];
  throw ShapeError("cols() on tensor of rank " + std::to_string(dims.size()));
}

float& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
const float& Tensor::at(int r, int c) const {
  return data[static_cast<std::size_t>(r) * cols() + c];
}

bool Tensor::same_shape(const Tensor& other) const { return dims == other.dims; }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << ")";
  return os.str();
}

bool Tensor::all_finite() const {
  for (float x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

void matmul(const float* a, int m, int k, const float* b, int n, float* c) {
  const auto& ops = kern::active();
  std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p)
      ops.axpy(arow[p], b + static_cast<std::size_t>(p) * n, crow, n);
  }
}

void matmul_abt_acc(const float* a, int m, int k, const float* b, int n, float* c) {
  const auto& ops = kern::active();
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j)
      crow[j] += static_cast<float>(
          ops.dot(arow, b + static_cast<std::size_t>(j) * k, k));
  }
}

void matmul_atb_acc(const float* a, int m, int k, const float* b, int n, float* c) {
  const auto& ops = kern::active();
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    const float* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p)
      ops.axpy(arow[p], brow, c + static_cast<std::size_t>(p) * n, n);
  }
}

}  // namespace aim
