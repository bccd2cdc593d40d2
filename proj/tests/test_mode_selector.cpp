// Gumbel-Softmax ops, analytic mode posterior, the four-term ELBO against a
// double-precision scalar reimplementation (values and gradients), and
// training behavior of the mode selector.

#include "aim/mode_selector.hpp"

#include <cmath>
#include <map>

#include "aim/rng.hpp"
#include "doctest.h"
#include "ref_math.hpp"

using namespace aim;

namespace {

ModeSelectorConfig toy_config() {
  ModeSelectorConfig c;
  c.K = 2;
  c.d_z = 2;
  c.d_obs = 2;
  c.y_dim = 1;
  c.x_dim = 1;
  c.d_model = 4;
  c.heads = 2;
  c.attn_layers = 1;
  c.hidden = 4;
  return c;
}

ModeSelectorConfig small_config() {
  ModeSelectorConfig c;
  c.K = 4;
  c.d_z = 8;
  c.d_obs = 8;
  c.y_dim = 2;
  c.x_dim = 4;
  c.d_model = 8;
  c.heads = 2;
  c.attn_layers = 1;
  c.hidden = 16;
  return c;
}

Tensor random_tokens(int d_obs, Rng& rng) {
  Tensor t = Tensor::zeros({kNumViews, d_obs});
  for (float& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

// Two synthetic interaction modes: shared scene tokens, embeddings clustered
// around +/- a fixed direction.
struct SyntheticModes {
  std::vector<ElboSample> samples;
  std::vector<int> labels;
};

SyntheticModes synthetic_modes(const ModeSelectorConfig& cfg, int n,
                               std::uint64_t seed) {
  SyntheticModes out;
  Rng rng(seed);
  Tensor tokens = random_tokens(cfg.d_obs, rng);
  std::vector<float> dir(cfg.d_z);
  for (float& v : dir) v = static_cast<float>(rng.normal());
  for (int i = 0; i < n; ++i) {
    int label = static_cast<int>(rng.below(2));
    ElboSample s;
    s.tokens = tokens;
    s.z.resize(cfg.d_z);
    float sign = label ? 1.0f : -1.0f;
    for (int j = 0; j < cfg.d_z; ++j)
      s.z[j] = sign * dir[j] + 0.1f * static_cast<float>(rng.normal());
    out.samples.push_back(std::move(s));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace

TEST_CASE("gumbel-softmax sampling: limits, zero noise, determinism, errors") {
  std::vector<float> log_pi = {std::log(0.2f), std::log(0.5f), std::log(0.3f)};

  // tau -> infinity: uniform
  GumbelDraw hot = gumbel_softmax_sample(log_pi, 1e6f, 9);
  for (float w : hot.omega) CHECK(std::fabs(w - 1.0f / 3.0f) < 1e-3f);

  // tau -> 0: essentially one-hot draws. The top-two logit gap has positive
  // density at 0, so sharpness 0.99 needs tau below the gap scale: at
  // tau=0.01 about 2% of draws stay soft, at tau=0.002 under 1%.
  int sharp_001 = 0, sharp_0002 = 0;
  for (int i = 0; i < 1000; ++i) {
    GumbelDraw d = gumbel_softmax_sample(log_pi, 0.01f, 1000 + i);
    float mx = std::max({d.omega[0], d.omega[1], d.omega[2]});
    sharp_001 += mx > 0.99f;
    d = gumbel_softmax_sample(log_pi, 0.002f, 1000 + i);
    mx = std::max({d.omega[0], d.omega[1], d.omega[2]});
    sharp_0002 += mx > 0.99f;
  }
  CHECK(sharp_001 >= 970);
  CHECK(sharp_0002 >= 990);

  // zero gumbel noise + uniform pi -> exactly uniform omega (graph op path)
  Graph g;
  Value logits = g.input(Tensor({1, 4}, {0.3f, 0.3f, 0.3f, 0.3f}));
  Value noise = g.input(Tensor::zeros({1, 4}));
  const Tensor& w = g.value(gumbel_softmax(logits, 0.7f, noise));
  for (float v : w.data) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));

  // determinism and simplex invariants
  GumbelDraw a = gumbel_softmax_sample(log_pi, 1.0f, 5);
  GumbelDraw b = gumbel_softmax_sample(log_pi, 1.0f, 5);
  CHECK(a.omega == b.omega);
  float s = 0;
  for (float v : a.omega) {
    CHECK(v > 0.0f);
    s += v;
  }
  CHECK(s == doctest::Approx(1.0f).epsilon(1e-6));

  CHECK_THROWS_AS(gumbel_softmax_sample(log_pi, 0.0f, 1), ConfigError);
  CHECK_THROWS_AS(gumbel_softmax_sample(log_pi, -1.0f, 1), ConfigError);
}

TEST_CASE("gumbel density: symmetric point, swap symmetry, quadrature, errors") {
  // symmetric k=2 point: density equals tau (so tau=0.25 gives 0.25)
  for (double tau : {0.25, 0.5, 1.0, 2.0}) {
    double p = gumbel_density({0.5, 0.5}, {0.5, 0.5}, tau);
    CHECK(p == doctest::Approx(tau).epsilon(1e-6));
  }

  // symmetry under coordinate swap when pi is uniform
  for (double w1 : {0.1, 0.3, 0.45}) {
    double a = gumbel_density({w1, 1 - w1}, {0.5, 0.5}, 0.7);
    double b = gumbel_density({1 - w1, w1}, {0.5, 0.5}, 0.7);
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
  }

  // numeric quadrature over the 1-simplex. The density has integrable
  // omega^(tau-1) corner singularities for tau < 1, so integrate in logit
  // space where the Jacobian omega(1-omega) tames them.
  auto integral = [](const std::vector<double>& pi, double tau) {
    const int n = 40000;
    // |t| <= 34 keeps 1/(1+e^t) strictly inside (0,1) in double precision;
    // the truncated tail mass is O(e^(-34 tau)), well under the tolerance.
    const double lo = -34.0, hi = 34.0;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
      double t = lo + (hi - lo) * (i + 0.5) / n;
      double w1 = 1.0 / (1.0 + std::exp(-t));
      double w2 = 1.0 / (1.0 + std::exp(t));  // 1 - w1 without cancellation
      acc += gumbel_density({w1, w2}, pi, tau) * w1 * w2 * (hi - lo) / n;
    }
    return acc;
  };
  CHECK(integral({0.5, 0.5}, 1.0) == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(integral({0.5, 0.5}, 0.25) == doctest::Approx(1.0).epsilon(1e-2));
  CHECK(integral({0.7, 0.3}, 1.5) == doctest::Approx(1.0).epsilon(1e-2));

  // empirical check: sampled omega_1 histogram matches the density
  {
    std::vector<double> pi = {0.3, 0.7};
    std::vector<float> log_pi = {std::log(0.3f), std::log(0.7f)};
    const int bins = 10, n = 20000;
    std::vector<double> hist(bins, 0.0);
    for (int i = 0; i < n; ++i) {
      GumbelDraw d = gumbel_softmax_sample(log_pi, 1.0f, 70000 + i);
      int b = std::min(bins - 1, static_cast<int>(d.omega[0] * bins));
      hist[b] += static_cast<double>(bins) / n;
    }
    for (int b = 0; b < bins; ++b) {
      double mid = (b + 0.5) / bins;
      double expected = gumbel_density({mid, 1 - mid}, pi, 1.0);
      CHECK(std::fabs(hist[b] - expected) < 0.12);
    }
  }

  CHECK_THROWS_AS(gumbel_density({0.0, 1.0}, {0.5, 0.5}, 1.0), NumericError);
  CHECK_THROWS_AS(gumbel_density({1.0, 0.0}, {0.5, 0.5}, 1.0), NumericError);
  CHECK_THROWS_AS(gumbel_density({0.5, 0.5}, {0.5, 0.5}, 0.0), ConfigError);
}

TEST_CASE("mixture posterior: hand values, separation, symmetry, oracle") {
  // K=2, uniform pi, x=0, components N(0,1) and N(2,1): 1/(1+e^-2)
  std::vector<double> q = mixture_posterior({{0.0f}, {2.0f}}, {{0.0f}, {0.0f}},
                                           {0.5f, 0.5f}, {0.0f});
  CHECK(q[0] == doctest::Approx(0.8808f).epsilon(1e-3));
  CHECK(q[1] == doctest::Approx(0.1192f).epsilon(1e-3));

  // x at a far-separated component mean
  q = mixture_posterior({{0.0f, 0.0f}, {8.0f, 8.0f}},
                        {{0.0f, 0.0f}, {0.0f, 0.0f}}, {0.5f, 0.5f},
                        {0.0f, 0.0f});
  CHECK(q[0] > 0.99f);

  // identical components -> prior weights
  q = mixture_posterior({{1.0f}, {1.0f}, {1.0f}}, {{0.5f}, {0.5f}, {0.5f}},
                        {0.2f, 0.5f, 0.3f}, {0.7f});
  CHECK(q[0] == doctest::Approx(0.2f).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(0.5f).epsilon(1e-6));
  CHECK(q[2] == doctest::Approx(0.3f).epsilon(1e-6));

  // random instances vs a naive direct-density Bayes oracle, 1e-8
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 3, d = 4;
    std::vector<std::vector<float>> mu(K, std::vector<float>(d));
    std::vector<std::vector<float>> lv(K, std::vector<float>(d));
    std::vector<float> pi(K), x(d);
    double psum = 0;
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < d; ++i) {
        mu[k][i] = static_cast<float>(rng.normal());
        lv[k][i] = static_cast<float>(0.5 * rng.normal());
      }
      pi[k] = static_cast<float>(rng.uniform(0.1, 1.0));
      psum += pi[k];
    }
    for (float& p : pi) p = static_cast<float>(p / psum);
    for (int i = 0; i < d; ++i) x[i] = static_cast<float>(rng.normal());

    std::vector<double> dens(K);
    double den = 0;
    for (int k = 0; k < K; ++k) {
      double p = 1.0;
      for (int i = 0; i < d; ++i) {
        double var = std::exp(static_cast<double>(lv[k][i]));
        double diff = static_cast<double>(x[i]) - mu[k][i];
        p *= std::exp(-0.5 * diff * diff / var) /
             std::sqrt(2.0 * 3.14159265358979323846 * var);
      }
      dens[k] = pi[k] * p;
      den += dens[k];
    }
    std::vector<double> got = mixture_posterior(mu, lv, pi, x);
    double rowsum = 0;
    for (int k = 0; k < K; ++k) {
      CHECK(std::fabs(got[k] - dens[k] / den) < 1e-8);
      rowsum += got[k];
    }
    CHECK(std::fabs(rowsum - 1.0) < 1e-6);
  }
}

namespace {

using Vec = refm::Vec;

Vec vgelu(Vec v) {
  for (double& x : v) x = refm::gelu(x);
  return v;
}

// Double-precision scalar reimplementation of the whole ELBO for one sample
// in the toy configuration, over a name->values map of parameters.
struct RefElbo {
  ModeSelectorConfig cfg;
  std::map<std::string, Vec> p;
  Vec tokens;  // 5 x d_obs row-major
  Vec z;
  Vec noise_y, noise_x, noise_g;
  double tau = 1.0;

  Vec mlp(const std::string& name, const Vec& in, int in_dim, int out_dim) const {
    const int H = cfg.hidden;
    Vec h = refm::matmul(in, 1, in_dim, p.at(name + ".l0.w"), H);
    for (int i = 0; i < H; ++i) h[i] += p.at(name + ".l0.b")[i];
    h = vgelu(h);
    Vec r = refm::matmul(h, 1, H, p.at(name + ".l1.w"), H);
    for (int i = 0; i < H; ++i) r[i] += p.at(name + ".l1.b")[i];
    r = vgelu(r);
    for (int i = 0; i < H; ++i) h[i] += r[i];
    Vec out = refm::matmul(h, 1, H, p.at(name + ".out.w"), out_dim);
    for (int i = 0; i < out_dim; ++i) out[i] += p.at(name + ".out.b")[i];
    return out;
  }

  static void split(const Vec& v, int dim, double lo, double hi, Vec& mu, Vec& lv) {
    mu.assign(v.begin(), v.begin() + dim);
    lv.assign(v.begin() + dim, v.begin() + 2 * dim);
    for (double& x : lv) x = std::min(hi, std::max(lo, x));
  }

  Vec decode(const Vec& xrow) const {
    const int dm = cfg.d_model, V = 5;
    Vec S((V + 1) * dm);
    Vec T = refm::matmul(tokens, V, cfg.d_obs, p.at("ms.dec.tok.w"), dm);
    for (int r = 0; r < V; ++r)
      for (int c = 0; c < dm; ++c)
        S[r * dm + c] = T[r * dm + c] + p.at("ms.dec.tok.b")[c];
    Vec X = refm::matmul(xrow, 1, cfg.x_dim, p.at("ms.dec.x.w"), dm);
    for (int c = 0; c < dm; ++c) S[V * dm + c] = X[c] + p.at("ms.dec.x.b")[c];

    const int rows = V + 1;
    for (int l = 0; l < cfg.attn_layers; ++l) {
      std::string pre = "ms.dec.L" + std::to_string(l);
      Vec a = refm::layer_norm_rows(S, rows, dm, p.at(pre + ".ln1.g"),
                                    p.at(pre + ".ln1.b"));
      Vec q = refm::matmul(a, rows, dm, p.at(pre + ".wq"), dm);
      Vec k = refm::matmul(a, rows, dm, p.at(pre + ".wk"), dm);
      Vec v = refm::matmul(a, rows, dm, p.at(pre + ".wv"), dm);
      Vec att = refm::attention(q, k, v, rows, dm, cfg.heads);
      Vec proj = refm::matmul(att, rows, dm, p.at(pre + ".wo"), dm);
      for (std::size_t i = 0; i < S.size(); ++i) S[i] += proj[i];
      Vec m = refm::layer_norm_rows(S, rows, dm, p.at(pre + ".ln2.g"),
                                    p.at(pre + ".ln2.b"));
      Vec h = refm::matmul(m, rows, dm, p.at(pre + ".mlp.w1"), 2 * dm);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < 2 * dm; ++c)
          h[r * 2 * dm + c] += p.at(pre + ".mlp.b1")[c];
      h = vgelu(h);
      Vec h2 = refm::matmul(h, rows, 2 * dm, p.at(pre + ".mlp.w2"), dm);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < dm; ++c) {
          S[r * dm + c] += h2[r * dm + c] + p.at("ms.dec.L" + std::to_string(l) +
                                                ".mlp.b2")[c];
        }
    }
    Vec f = refm::layer_norm_rows(S, rows, dm, p.at("ms.dec.lnf.g"),
                                  p.at("ms.dec.lnf.b"));
    Vec xt(f.begin() + V * dm, f.begin() + (V + 1) * dm);
    Vec out = refm::matmul(xt, 1, dm, p.at("ms.dec.out.w"), cfg.d_z);
    for (int i = 0; i < cfg.d_z; ++i) out[i] += p.at("ms.dec.out.b")[i];
    return out;
  }

  // returns {total, recon, x_kl, y_kl, c_kl}
  std::array<double, 5> terms() const {
    constexpr double kLog2Pi = 1.8378770664093454836;
    Vec gvec(cfg.d_obs, 0.0);
    for (int v = 0; v < 5; ++v)
      for (int c = 0; c < cfg.d_obs; ++c) gvec[c] += tokens[v * cfg.d_obs + c] / 5.0;
    Vec zin = z;
    zin.insert(zin.end(), gvec.begin(), gvec.end());

    Vec mu_y, lv_y, mu_x, lv_x;
    split(mlp("ms.qy", zin, cfg.d_z + cfg.d_obs, 2 * cfg.y_dim), cfg.y_dim,
          cfg.logvar_min, cfg.logvar_max, mu_y, lv_y);
    split(mlp("ms.qx", zin, cfg.d_z + cfg.d_obs, 2 * cfg.x_dim), cfg.x_dim,
          cfg.logvar_min, cfg.logvar_max, mu_x, lv_x);
    Vec y(cfg.y_dim), x(cfg.x_dim);
    for (int i = 0; i < cfg.y_dim; ++i)
      y[i] = mu_y[i] + std::exp(0.5 * lv_y[i]) * noise_y[i];
    for (int i = 0; i < cfg.x_dim; ++i)
      x[i] = mu_x[i] + std::exp(0.5 * lv_x[i]) * noise_x[i];

    Vec log_pi = refm::log_softmax_rows(p.at("ms.pi"), 1, cfg.K);
    Vec logits(cfg.K);
    std::vector<Vec> pmu(cfg.K), plv(cfg.K);
    for (int k = 0; k < cfg.K; ++k) {
      Vec pin(cfg.K, 0.0);
      pin[k] = 1.0;
      pin.insert(pin.end(), y.begin(), y.end());
      pin.insert(pin.end(), gvec.begin(), gvec.end());
      split(mlp("ms.prior", pin, cfg.K + cfg.y_dim + cfg.d_obs, 2 * cfg.x_dim),
            cfg.x_dim, cfg.logvar_min, cfg.logvar_max, pmu[k], plv[k]);
      double s = 0;
      for (int i = 0; i < cfg.x_dim; ++i) {
        double d = x[i] - pmu[k][i];
        s += plv[k][i] + d * d * std::exp(-plv[k][i]);
      }
      logits[k] = log_pi[k] - 0.5 * (s + cfg.x_dim * kLog2Pi);
    }
    Vec log_qc = refm::log_softmax_rows(logits, 1, cfg.K);

    double c_kl = 0;
    for (int k = 0; k < cfg.K; ++k)
      c_kl += std::exp(log_qc[k]) * (log_qc[k] - log_pi[k]);

    // one-sample conditional-prior term: relaxed draw omega ~ GS(q_c, tau)
    // feeds the prior net
    Vec gs(cfg.K);
    for (int k = 0; k < cfg.K; ++k) gs[k] = (log_qc[k] + noise_g[k]) / tau;
    Vec omega = refm::log_softmax_rows(gs, 1, cfg.K);
    for (double& v : omega) v = std::exp(v);
    Vec wpin = omega;
    wpin.insert(wpin.end(), y.begin(), y.end());
    wpin.insert(wpin.end(), gvec.begin(), gvec.end());
    Vec wmu, wlv;
    split(mlp("ms.prior", wpin, cfg.K + cfg.y_dim + cfg.d_obs, 2 * cfg.x_dim),
          cfg.x_dim, cfg.logvar_min, cfg.logvar_max, wmu, wlv);
    double x_kl = refm::kl_diag_gaussian(mu_x, lv_x, wmu, wlv);
    Vec zeros(cfg.y_dim, 0.0);
    double y_kl = refm::kl_diag_gaussian(mu_y, lv_y, zeros, zeros);

    Vec eps_hat = decode(x);
    double recon = 0;
    for (int i = 0; i < cfg.d_z; ++i) {
      double d = eps_hat[i] - z[i];
      recon += d * d;
    }
    double total = recon + cfg.kl_beta * (x_kl + y_kl + c_kl);
    return {total, recon, x_kl, y_kl, c_kl};
  }
};

}  // namespace

TEST_CASE("elbo: all four terms match the double-precision scalar oracle") {
  ModeSelectorConfig cfg = toy_config();
  ModeSelector m(cfg, 21);
  Rng rng(88);
  ElboSample s;
  s.tokens = random_tokens(cfg.d_obs, rng);
  s.z = {0.4f, -0.9f};
  const std::uint64_t noise_seed = 314;

  RefElbo ref;
  ref.cfg = cfg;
  for (const auto& [name, slot] : m.params().slots())
    ref.p[name] = Vec(slot.value.data.begin(), slot.value.data.end());
  ref.tokens = Vec(s.tokens.data.begin(), s.tokens.data.end());
  ref.z = Vec(s.z.begin(), s.z.end());
  {
    Rng nrng(split_seed(noise_seed, 0));
    ref.noise_y.resize(cfg.y_dim);
    for (double& v : ref.noise_y) v = nrng.normal();
    ref.noise_x.resize(cfg.x_dim);
    for (double& v : ref.noise_x) v = nrng.normal();
    ref.noise_g.resize(cfg.K);
    for (double& v : ref.noise_g) v = static_cast<float>(nrng.gumbel());
    ref.tau = 0.7;
  }

  ElboTerms got = m.evaluate({s}, noise_seed, 0.7f);
  std::array<double, 5> want = ref.terms();
  CHECK(got.total == doctest::Approx(want[0]).epsilon(1e-5));
  CHECK(got.recon == doctest::Approx(want[1]).epsilon(1e-5));
  CHECK(got.x_kl == doctest::Approx(want[2]).epsilon(1e-5));
  CHECK(got.y_kl == doctest::Approx(want[3]).epsilon(1e-5));
  CHECK(got.c_kl == doctest::Approx(want[4]).epsilon(1e-5));

  // KL terms are nonnegative
  CHECK(got.x_kl >= -1e-6);
  CHECK(got.y_kl >= -1e-6);
  CHECK(got.c_kl >= -1e-6);
}

TEST_CASE("elbo gradients match finite differences over the double oracle") {
  ModeSelectorConfig cfg = toy_config();
  ModeSelector m(cfg, 21);
  Rng rng(88);
  ElboSample s;
  s.tokens = random_tokens(cfg.d_obs, rng);
  s.z = {0.4f, -0.9f};
  const std::uint64_t noise_seed = 314;

  RefElbo ref;
  ref.cfg = cfg;
  for (const auto& [name, slot] : m.params().slots())
    ref.p[name] = Vec(slot.value.data.begin(), slot.value.data.end());
  ref.tokens = Vec(s.tokens.data.begin(), s.tokens.data.end());
  ref.z = Vec(s.z.begin(), s.z.end());
  {
    Rng nrng(split_seed(noise_seed, 0));
    ref.noise_y.resize(cfg.y_dim);
    for (double& v : ref.noise_y) v = nrng.normal();
    ref.noise_x.resize(cfg.x_dim);
    for (double& v : ref.noise_x) v = nrng.normal();
    ref.noise_g.resize(cfg.K);
    for (double& v : ref.noise_g) v = static_cast<float>(nrng.gumbel());
    ref.tau = 0.7;
  }

  // engine analytic gradients
  ParamStore& ps = m.params();
  ps.zero_grad();
  Graph g(&ps);
  Value loss = m.build_elbo(g, {s}, noise_seed, 0.7f, nullptr);
  g.backward(loss);

  const double h = 1e-3;
  double worst = 0;
  std::string worst_name;
  for (auto& [name, slot] : ps.slots()) {
    Vec& pv = ref.p[name];
    for (std::size_t i = 0; i < pv.size(); ++i) {
      double orig = pv[i];
      pv[i] = orig + h;
      double up = ref.terms()[0];
      pv[i] = orig - h;
      double down = ref.terms()[0];
      pv[i] = orig;
      double fd = (up - down) / (2.0 * h);
      double denom = std::max({std::fabs(fd), std::fabs((double)slot.grad.data[i]), 1e-2});
      double err = std::fabs(fd - slot.grad.data[i]) / denom;
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
  }
  INFO("worst param: ", worst_name, " err ", worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("elbo structural identities: zeroed posterior nets, empty batch") {
  ModeSelectorConfig cfg = small_config();
  ModeSelector m(cfg, 3);

  // q_y forced to N(0, I): zero its weights -> mu=0, logvar=clamp(0)=0
  for (const char* n : {"ms.qy.l0.w", "ms.qy.l0.b", "ms.qy.l1.w", "ms.qy.l1.b",
                        "ms.qy.out.w", "ms.qy.out.b"})
    for (float& v : m.params().slot(n).value.data) v = 0.0f;

  Rng rng(17);
  ElboSample s;
  s.tokens = random_tokens(cfg.d_obs, rng);
  s.z.assign(cfg.d_z, 0.5f);
  ElboTerms t = m.evaluate({s}, 1, 1.0f);
  CHECK(t.y_kl == doctest::Approx(0.0).epsilon(1e-12));

  Graph g(&m.params());
  CHECK_THROWS_AS(m.build_elbo(g, {}, 1, 1.0f, nullptr), StateError);
  CHECK_THROWS_AS(m.build_elbo(g, {s}, 1, 0.0f, nullptr), ConfigError);
}

TEST_CASE("mode selector training: recon drops, determinism, zero epochs") {
  ModeSelectorConfig cfg = small_config();
  SyntheticModes data = synthetic_modes(cfg, 64, 5);

  ModeSelector m(cfg, 11);
  std::uint64_t before = m.params().checksum();
  CHECK(train_mode_selector(m, data.samples, 0, 1e-3, 7).empty());
  CHECK(m.params().checksum() == before);

  std::vector<TrainCurvePoint> curve =
      train_mode_selector(m, data.samples, 60, 3e-3, 7);
  REQUIRE(curve.size() == 60);
  INFO("recon epoch0 = ", curve.front().terms.recon,
       " final = ", curve.back().terms.recon);
  CHECK(curve.back().terms.recon * 5.0 <= curve.front().terms.recon);
  CHECK(curve.front().tau == doctest::Approx(cfg.tau_start));
  CHECK(curve.back().tau == doctest::Approx(cfg.tau_end));
  for (const TrainCurvePoint& pt : curve) {
    CHECK(std::isfinite(pt.terms.total));
    CHECK(pt.terms.x_kl >= -1e-6);
    CHECK(pt.terms.y_kl >= -1e-6);
    CHECK(pt.terms.c_kl >= -1e-6);
  }

  // same seed, same data -> identical parameters
  ModeSelector m2(cfg, 11);
  train_mode_selector(m2, data.samples, 60, 3e-3, 7);
  CHECK(m2.params().checksum() == m.params().checksum());
}

TEST_CASE("inference: determinism, range errors, cluster separation") {
  ModeSelectorConfig cfg = small_config();
  SyntheticModes data = synthetic_modes(cfg, 64, 5);
  ModeSelector m(cfg, 11);
  train_mode_selector(m, data.samples, 200, 5e-3, 7);

  const Tensor& tokens = data.samples[0].tokens;
  std::vector<float> e0 = m.infer_mode(tokens, 0);
  CHECK(m.infer_mode(tokens, 0) == e0);  // pure function
  CHECK(e0.size() == static_cast<std::size_t>(cfg.d_z));
  CHECK_THROWS_AS(m.infer_mode(tokens, -1), ConfigError);
  CHECK_THROWS_AS(m.infer_mode(tokens, cfg.K), ConfigError);

  // the two dominant clusters decode to dissimilar embeddings
  std::vector<int> counts(cfg.K, 0);
  for (const ElboSample& s : data.samples) {
    std::vector<double> q = m.c_posterior(s.tokens, s.z);
    double rowsum = 0;
    for (float v : q) rowsum += v;
    CHECK(std::fabs(rowsum - 1.0) < 1e-6);
    ++counts[static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin())];
  }
  int first = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                               counts.begin());
  counts[first] = -1;
  int second = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                counts.begin());
  std::vector<float> ea = m.infer_mode(tokens, first);
  std::vector<float> eb = m.infer_mode(tokens, second);
  double dotp = 0, na = 0, nb = 0;
  for (int i = 0; i < cfg.d_z; ++i) {
    dotp += static_cast<double>(ea[i]) * eb[i];
    na += static_cast<double>(ea[i]) * ea[i];
    nb += static_cast<double>(eb[i]) * eb[i];
  }
  double cosine = dotp / std::sqrt(na * nb);
  INFO("cluster cosine = ", cosine);
  CHECK(cosine < 0.5);
}

TEST_CASE("cluster purity: self-labels give 1.0, random labels near chance") {
  ModeSelectorConfig cfg = small_config();
  SyntheticModes data = synthetic_modes(cfg, 100, 5);
  ModeSelector m(cfg, 11);
  train_mode_selector(m, data.samples, 40, 3e-3, 7);

  // labels equal to the model's own hard assignments -> purity exactly 1
  std::vector<int> self_labels;
  for (const ElboSample& s : data.samples) {
    std::vector<double> q = m.c_posterior(s.tokens, s.z);
    self_labels.push_back(
        static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin()));
  }
  CHECK(cluster_purity(m, data.samples, self_labels) == doctest::Approx(1.0));

  // random balanced binary labels -> near 0.5 (chance), never below it
  Rng rng(123);
  std::vector<int> random_labels;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    random_labels.push_back(static_cast<int>(rng.below(2)));
  double purity = cluster_purity(m, data.samples, random_labels);
  CHECK(purity >= 0.45);
  CHECK(purity <= 0.75);

  // trained on two separated synthetic modes, true labels are recovered well
  double true_purity = cluster_purity(m, data.samples, data.labels);
  INFO("purity vs true labels = ", true_purity);
  CHECK(true_purity >= 0.9);

  CHECK_THROWS_AS(cluster_purity(m, data.samples, std::vector<int>(3, 0)),
                  ShapeError);
}

TEST_CASE("mode selector checkpoint round trip") {
  ModeSelectorConfig cfg = small_config();
  ModeSelector m(cfg, 11);
  SyntheticModes data = synthetic_modes(cfg, 32, 5);
  train_mode_selector(m, data.samples, 10, 3e-3, 7);

  std::string path = std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR")
                                                       : "/tmp") +
                     "/aim_ms_ckpt.aimc";
  save_mode_selector(m, path);
  ModeSelector back = load_mode_selector(path);
  CHECK(back.config().K == cfg.K);
  CHECK(back.config().x_dim == cfg.x_dim);
  CHECK(back.params().checksum() == m.params().checksum());

  // identical behavior after reload
  std::vector<float> a = m.infer_mode(data.samples[0].tokens, 1);
  std::vector<float> b = back.infer_mode(data.samples[0].tokens, 1);
  CHECK(a == b);
  std::remove(path.c_str());
}
