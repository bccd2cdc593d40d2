#include "aim/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aim/rng.hpp"

namespace aim {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal_diag(const float* x, const float* mu, const float* var, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) {
    double diff = static_cast<double>(x[i]) - mu[i];
    s += std::log(static_cast<double>(var[i])) + diff * diff / var[i];
  }
  return -0.5 * (d * kLog2Pi + s);
}

double logsumexp(const std::vector<double>& v) {
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// squared distance of row n to a mean vector
double sqdist(const Tensor& data, int n, const float* mu, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) {
    double diff = static_cast<double>(data.at(n, i)) - mu[i];
    s += diff * diff;
  }
  return s;
}

void kmeanspp_init(const Tensor& data, GmmModel& m, Rng& rng) {
  int N = data.rows(), d = data.cols(), K = m.K;
  int first = static_cast<int>(rng.below(N));
  for (int i = 0; i < d; ++i) m.means.at(0, i) = data.at(first, i);
  std::vector<double> mind(N, std::numeric_limits<double>::max());
  for (int k = 1; k < K; ++k) {
    double total = 0;
    for (int n = 0; n < N; ++n) {
      mind[n] = std::min(mind[n], sqdist(data, n, &m.means.at(k - 1, 0), d));
      total += mind[n];
    }
    int pick = 0;
    if (total > 0) {
      double u = rng.uniform() * total, acc = 0;
      for (int n = 0; n < N; ++n) {
        acc += mind[n];
        if (acc >= u) {
          pick = n;
          break;
        }
      }
    } else {
      pick = static_cast<int>(rng.below(N));
    }
    for (int i = 0; i < d; ++i) m.means.at(k, i) = data.at(pick, i);
  }
}

void global_variance(const Tensor& data, std::vector<double>& var) {
  int N = data.rows(), d = data.cols();
  var.assign(d, 0.0);
  std::vector<double> mean(d, 0.0);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < d; ++i) mean[i] += data.at(n, i);
  for (double& v : mean) v /= N;
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < d; ++i) {
      double diff = data.at(n, i) - mean[i];
      var[i] += diff * diff;
    }
  for (double& v : var) v = v / N + kGmmRidge;
}

GmmModel run_em(const Tensor& data, int K, std::uint64_t seed, int max_iter,
                double tol, GmmFitInfo& info) {
  int N = data.rows(), d = data.cols();
  Rng rng(seed);
  GmmModel m;
  m.K = K;
  m.d = d;
  m.weights.assign(K, 1.0f / K);
  m.means = Tensor::zeros({K, d});
  m.vars = Tensor::zeros({K, d});
  kmeanspp_init(data, m, rng);
  std::vector<double> gvar;
  global_variance(data, gvar);
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < d; ++i) m.vars.at(k, i) = static_cast<float>(gvar[i]);

  std::vector<double> logp(K);
  std::vector<double> resp(static_cast<std::size_t>(N) * K);
  double prev_ll = -std::numeric_limits<double>::max();
  info.log_likelihood = prev_ll;
  info.iterations = 0;
  info.reseeds = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    // E-step
    double ll = 0;
    for (int n = 0; n < N; ++n) {
      for (int k = 0; k < K; ++k)
        logp[k] = std::log(static_cast<double>(m.weights[k])) +
                  log_normal_diag(&data.at(n, 0), &m.means.at(k, 0),
                                  &m.vars.at(k, 0), d);
      double lse = logsumexp(logp);
      ll += lse;
      for (int k = 0; k < K; ++k)
        resp[static_cast<std::size_t>(n) * K + k] = std::exp(logp[k] - lse);
    }
    info.log_likelihood = ll;
    info.iterations = iter + 1;
    info.ll_trace.push_back(ll);

    // M-step
    for (int k = 0; k < K; ++k) {
      double nk = 0;
      for (int n = 0; n < N; ++n) nk += resp[static_cast<std::size_t>(n) * K + k];
      if (nk < 1e-8) {
        // empty component: reseed at the point farthest from every mean
        ++info.reseeds;
        int far = 0;
        double best = -1;
        for (int n = 0; n < N; ++n) {
          double mind = std::numeric_limits<double>::max();
          for (int j = 0; j < K; ++j)
            mind = std::min(mind, sqdist(data, n, &m.means.at(j, 0), d));
          if (mind > best) {
            best = mind;
            far = n;
          }
        }
        for (int i = 0; i < d; ++i) {
          m.means.at(k, i) = data.at(far, i);
          m.vars.at(k, i) = static_cast<float>(gvar[i]);
        }
        m.weights[k] = 1.0f / N;
        continue;
      }
      for (int i = 0; i < d; ++i) {
        double mu = 0;
        for (int n = 0; n < N; ++n)
          mu += resp[static_cast<std::size_t>(n) * K + k] * data.at(n, i);
        mu /= nk;
        double var = 0;
        for (int n = 0; n < N; ++n) {
          double diff = data.at(n, i) - mu;
          var += resp[static_cast<std::size_t>(n) * K + k] * diff * diff;
        }
        m.means.at(k, i) = static_cast<float>(mu);
        m.vars.at(k, i) =
            static_cast<float>(std::max(var / nk + kGmmRidge, kGmmRidge));
      }
      m.weights[k] = static_cast<float>(nk / N);
    }
    float wsum = 0;
    for (float w : m.weights) wsum += w;
    for (float& w : m.weights) w /= wsum;

    if (ll - prev_ll < tol && iter > 0) break;
    prev_ll = ll;
  }
  return m;
}

}  // namespace

void GmmModel::validate() const {
  if (K <= 0 || d <= 0) throw StateError("gmm: empty model");
  double wsum = 0;
  for (float w : weights) wsum += w;
  if (std::fabs(wsum - 1.0) > 1e-6) throw StateError("gmm: weights do not sum to 1");
  for (float v : vars.data)
    if (v < kGmmRidge * (1 - 1e-6))
      throw StateError("gmm: variance below ridge");
}

GmmModel fit_em(const Tensor& data, int K, std::uint64_t seed, int max_iter,
                double tol, int restarts, GmmFitInfo* info) {
  if (data.rows() < K) throw StateError("fit_em: fewer samples than components");
  GmmModel best;
  GmmFitInfo best_info;
  best_info.log_likelihood = -std::numeric_limits<double>::max();
  for (int r = 0; r < restarts; ++r) {
    GmmFitInfo fi;
    GmmModel m = run_em(data, K, split_seed(seed, r), max_iter, tol, fi);
    if (fi.log_likelihood > best_info.log_likelihood) {
      best = std::move(m);
      best_info = fi;
    }
  }
  if (info) *info = best_info;
  best.validate();
  return best;
}

std::vector<float> responsibilities(const GmmModel& m, const float* x) {
  std::vector<double> logp(m.K);
  for (int k = 0; k < m.K; ++k)
    logp[k] = std::log(static_cast<double>(m.weights[k])) +
              log_normal_diag(x, &m.means.at(k, 0), &m.vars.at(k, 0), m.d);
  double lse = logsumexp(logp);
  std::vector<float> r(m.K);
  for (int k = 0; k < m.K; ++k) r[k] = static_cast<float>(std::exp(logp[k] - lse));
  return r;
}

int hard_assign(const GmmModel& m, const float* x) {
  std::vector<float> r = responsibilities(m, x);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

double log_density(const GmmModel& m, const float* x) {
  std::vector<double> logp(m.K);
  for (int k = 0; k < m.K; ++k)
    logp[k] = std::log(static_cast<double>(m.weights[k])) +
              log_normal_diag(x, &m.means.at(k, 0), &m.vars.at(k, 0), m.d);
  return logsumexp(logp);
}

double log_likelihood(const GmmModel& m, const Tensor& data) {
  double s = 0;
  for (int n = 0; n < data.rows(); ++n) s += log_density(m, &data.at(n, 0));
  return s;
}

Tensor gmm_sample(const GmmModel& m, int n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor out = Tensor::zeros({n, m.d});
  for (int s = 0; s < n; ++s) {
    double u = rng.uniform(), acc = 0;
    int k = m.K - 1;
    for (int j = 0; j < m.K; ++j) {
      acc += m.weights[j];
      if (u < acc) {
        k = j;
        break;
      }
    }
    for (int i = 0; i < m.d; ++i)
      out.at(s, i) = m.means.at(k, i) +
                     std::sqrt(m.vars.at(k, i)) * static_cast<float>(rng.normal());
  }
  return out;
}

void gmm_to_records(const GmmModel& m, const std::string& prefix,
                    std::map<std::string, Tensor>& out) {
  out[prefix + ".weights"] = Tensor::row(m.weights);
  out[prefix + ".means"] = m.means;
  out[prefix + ".vars"] = m.vars;
}

GmmModel gmm_from_records(const std::map<std::string, Tensor>& records,
                          const std::string& prefix) {
  GmmModel m;
  auto get = [&](const std::string& name) -> const Tensor& {
    auto it = records.find(prefix + name);
    if (it == records.end()) throw StateError("gmm record missing: " + prefix + name);
    return it->second;
  };
  m.means = get(".means");
  m.vars = get(".vars");
  m.weights = get(".weights").data;
  m.K = m.means.rows();
  m.d = m.means.cols();
  m.validate();
  return m;
}

}  // namespace aim
