#pragma once

// Double-precision scalar re-implementations of the graph kernels, used as
// independent oracles by the gradient and forward checks. Deliberately naive
// loops; no code shared with src/.

#include <cmath>
#include <vector>

namespace refm {

using Vec = std::vector<double>;

inline Vec matmul(const Vec& a, int m, int k, const Vec& b, int n) {
  Vec c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline Vec softmax_rows(const Vec& x, int rows, int cols) {
  Vec y(x.size());
  for (int r = 0; r < rows; ++r) {
    double m = x[r * cols];
    for (int c = 1; c < cols; ++c) m = std::max(m, x[r * cols + c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(x[r * cols + c] - m);
    for (int c = 0; c < cols; ++c) y[r * cols + c] = std::exp(x[r * cols + c] - m) / z;
  }
  return y;
}

inline Vec log_softmax_rows(const Vec& x, int rows, int cols) {
  Vec y = softmax_rows(x, rows, cols);
  for (double& v : y) v = std::log(v);
  return y;
}

inline Vec layer_norm_rows(const Vec& x, int rows, int cols, const Vec& gain,
                           const Vec& bias, double eps = 1e-5) {
  Vec y(x.size());
  for (int r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += x[r * cols + c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      double d = x[r * cols + c] - mu;
      var += d * d;
    }
    var /= cols;
    double is = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c)
      y[r * cols + c] = (x[r * cols + c] - mu) * is * gain[c] + bias[c];
  }
  return y;
}

inline double gelu(double x) {
  double u = 0.7978845608028654 * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline Vec attention(const Vec& q, const Vec& k, const Vec& v, int rows, int dim,
                     int heads) {
  int dh = dim / heads;
  Vec out(static_cast<std::size_t>(rows) * dim, 0.0);
  for (int h = 0; h < heads; ++h) {
    Vec scores(static_cast<std::size_t>(rows) * rows, 0.0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c)
          s += q[i * dim + h * dh + c] * k[j * dim + h * dh + c];
        scores[i * rows + j] = s / std::sqrt(static_cast<double>(dh));
      }
    Vec p = softmax_rows(scores, rows, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < rows; ++j)
        for (int c = 0; c < dh; ++c)
          out[i * dim + h * dh + c] += p[i * rows + j] * v[j * dim + h * dh + c];
  }
  return out;
}

inline double kl_diag_gaussian(const Vec& m1, const Vec& l1, const Vec& m2,
                               const Vec& l2) {
  double s = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) {
    double d = m1[i] - m2[i];
    s += 0.5 * (l2[i] - l1[i] + (std::exp(l1[i]) + d * d) * std::exp(-l2[i]) - 1.0);
  }
  return s;
}

inline double weighted(const Vec& w, const Vec& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}

}  // namespace refm
