#pragma once

// Conditional Gaussian-mixture VAE over task embeddings: discrete interaction
// modes c, continuous latents y (scene-level) and x (mode-level), a token
// decoder with self-attention over per-view features, and the analytic
// Bayes posterior over modes.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aim/embed.hpp"
#include "aim/graph.hpp"
#include "aim/render.hpp"
#include "aim/tensor.hpp"

namespace aim {

struct ModeSelectorConfig {
  int K = 8;         // mixture components (interaction modes)
  int d_z = 32;      // task-embedding dimension
  int d_obs = 32;    // per-view frozen feature dimension
  int y_dim = 8;
  int x_dim = 16;
  int d_model = 32;  // decoder token width
  int heads = 4;
  int attn_layers = 2;
  int hidden = 64;   // residual-MLP width
  float tau_start = 1.0f;   // Gumbel-Softmax temperature annealing
  float tau_end = 0.3f;
  float kl_beta = 1.0f;     // weight on the three KL terms
  float logvar_min = -8.0f;
  float logvar_max = 4.0f;
};

// Relaxed one-hot draw.
struct GumbelDraw {
  std::vector<float> g;      // Gumbel(0,1) variates
  std::vector<float> omega;  // point on the simplex interior
  float tau = 1.0f;
};

// omega_i = exp((log_pi_i + g_i)/tau) / sum_j exp(...). Throws ConfigError
// if tau <= 0.
GumbelDraw gumbel_softmax_sample(const std::vector<float>& log_pi, float tau,
                                 std::uint64_t seed);

// Density of the relaxed categorical at omega (simplex interior):
// Gamma(k) tau^{k-1} (sum_i pi_i/omega_i^tau)^{-k} prod_i (pi_i/omega_i^{tau+1}).
// Throws NumericError on boundary omega.
double gumbel_density(const std::vector<double>& omega,
                      const std::vector<double>& pi, double tau);

// Bayes responsibilities over components given diagonal-Gaussian parameters:
// q_j ∝ pi_j N(x; mu_j, exp(logvar_j)). Pure math, log-space, double
// precision throughout so it can serve as its own reference.
std::vector<double> mixture_posterior(const std::vector<std::vector<float>>& mu,
                                      const std::vector<std::vector<float>>& logvar,
                                      const std::vector<float>& pi,
                                      const std::vector<float>& x);

struct ElboSample {
  Tensor tokens;         // {views, d_obs} frozen per-view features
  std::vector<float> z;  // task embedding
};

struct ElboTerms {
  double total = 0, recon = 0, x_kl = 0, y_kl = 0, c_kl = 0;
};

class ModeSelector {
 public:
  ModeSelector(ModeSelectorConfig cfg, std::uint64_t seed);

  const ModeSelectorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Frozen per-view tokens: each view encoded by its slice of the frozen
  // projection, so the mode selector never trains the perception stack.
  static Tensor obs_tokens(const Featurizer& f, const ViewSet& o);

  // Builds the four-term ELBO over the batch (mean per sample):
  //   recon + beta * (x_kl + y_kl + c_kl)
  // with single-sample reparameterized draws for x and y seeded from
  // noise_seed. The conditional-prior term (x_kl) is a one-sample estimate:
  // a relaxed draw omega ~ GumbelSoftmax(q_c, tau) feeds the prior net, so
  // tau controls how soft the mode assignment is on the training path.
  // Returns the scalar loss node; terms are the detached values.
  Value build_elbo(Graph& g, const std::vector<ElboSample>& batch,
                   std::uint64_t noise_seed, float tau, ElboTerms* terms) const;

  // One Adam step on the batch ELBO. Throws NumericError on divergence.
  ElboTerms elbo_step(const std::vector<ElboSample>& batch,
                      std::uint64_t noise_seed, double lr, float tau);

  // Forward-only term evaluation (no gradient, params untouched).
  ElboTerms evaluate(const std::vector<ElboSample>& batch,
                     std::uint64_t noise_seed, float tau) const;

  // Posterior over modes for one trajectory via the deterministic means of
  // q_x and q_y, then Bayes over the prior components.
  std::vector<double> c_posterior(const Tensor& tokens,
                                  const std::vector<float>& z) const;

  // Deterministic inference: c = one-hot(k), y = 0, x = prior mean,
  // epsilon = decoder mean. k in [0, K).
  std::vector<float> infer_mode(const Tensor& tokens, int k) const;

  std::vector<float> pi() const;  // softmax of the categorical prior logits

 private:
  ModeSelectorConfig cfg_;
  mutable ParamStore params_;
};

struct TrainCurvePoint {
  int epoch = 0;
  ElboTerms terms;
  float tau = 1.0f;
};

// Adam training over shuffled minibatches; temperature annealed linearly
// tau_start -> tau_end. Deterministic given seed. Throws NumericError when
// the loss exceeds 1e6.
std::vector<TrainCurvePoint> train_mode_selector(
    ModeSelector& m, const std::vector<ElboSample>& data, int epochs,
    double lr, std::uint64_t seed, int batch_size = 16);

void save_loss_curve_csv(const std::vector<TrainCurvePoint>& curve,
                         const std::string& path);

// Fraction of eval trajectories whose argmax-posterior cluster matches the
// majority ground-truth label of that cluster.
double cluster_purity(const ModeSelector& m,
                      const std::vector<ElboSample>& samples,
                      const std::vector<int>& labels);

void save_mode_selector(const ModeSelector& m, const std::string& path);
ModeSelector load_mode_selector(const std::string& path);

}  // namespace aim
