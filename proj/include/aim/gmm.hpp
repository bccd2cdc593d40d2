#pragma once

// Diagonal-covariance Gaussian mixtures fit by EM with k-means++ starts,
// used for embedding clustering and per-cluster action priors.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aim/tensor.hpp"

namespace aim {

struct GmmModel {
  int K = 0;
  int d = 0;
  std::vector<float> weights;  // pi_k, sums to 1
  Tensor means;                // {K, d}
  Tensor vars;                 // {K, d}, every entry >= ridge

  void validate() const;  // throws StateError on invariant violation
};

inline constexpr double kGmmRidge = 1e-6;

struct GmmFitInfo {
  double log_likelihood = 0;
  int iterations = 0;
  int reseeds = 0;                // empty-cluster rescues
  std::vector<double> ll_trace;   // per-iteration ll of the winning restart
};

// Best of `restarts` EM runs; log-likelihood is nondecreasing within a run.
GmmModel fit_em(const Tensor& data, int K, std::uint64_t seed,
                int max_iter = 200, double tol = 1e-6, int restarts = 3,
                GmmFitInfo* info = nullptr);

// r_k proportional to pi_k N(x; mu_k, var_k), normalized to sum 1.
std::vector<float> responsibilities(const GmmModel& m, const float* x);
int hard_assign(const GmmModel& m, const float* x);

double log_density(const GmmModel& m, const float* x);
double log_likelihood(const GmmModel& m, const Tensor& data);

Tensor gmm_sample(const GmmModel& m, int n, std::uint64_t seed);

// Checkpoint records under the given name prefix.
void gmm_to_records(const GmmModel& m, const std::string& prefix,
                    std::map<std::string, Tensor>& out);
GmmModel gmm_from_records(const std::map<std::string, Tensor>& records,
                          const std::string& prefix);

}  // namespace aim
