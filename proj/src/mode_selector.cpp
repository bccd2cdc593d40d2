#include "aim/mode_selector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "aim/checkpoint.hpp"
#include "aim/rng.hpp"

namespace aim {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Tensor normal_init(std::vector<int> dims, float stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.data) v = stddev * static_cast<float>(rng.normal());
  return t;
}

// name.l0 (in -> hidden, gelu), residual hidden block, name.out head.
void init_mlp(ParamStore& ps, const std::string& name, int in, int hidden,
              int out, Rng& rng) {
  ps.create(name + ".l0.w", normal_init({in, hidden}, 1.0f / std::sqrt((float)in), rng));
  ps.create(name + ".l0.b", Tensor::zeros({1, hidden}));
  ps.create(name + ".l1.w",
            normal_init({hidden, hidden}, 1.0f / std::sqrt((float)hidden), rng));
  ps.create(name + ".l1.b", Tensor::zeros({1, hidden}));
  ps.create(name + ".out.w",
            normal_init({hidden, out}, 1.0f / std::sqrt((float)hidden), rng));
  ps.create(name + ".out.b", Tensor::zeros({1, out}));
}

Value mlp_forward(Graph& g, const std::string& name, Value in) {
  Value h = gelu(add_bias(matmul(in, g.param(name + ".l0.w")),
                          g.param(name + ".l0.b")));
  Value r = gelu(add_bias(matmul(h, g.param(name + ".l1.w")),
                          g.param(name + ".l1.b")));
  h = add(h, r);  // residual hidden block
  return add_bias(matmul(h, g.param(name + ".out.w")), g.param(name + ".out.b"));
}

Tensor row_tensor(const std::vector<float>& v) {
  return Tensor({1, static_cast<int>(v.size())}, v);
}

// log N(x; mu, exp(logvar)) summed over dims, as a {1} graph scalar.
Value log_normal(Graph& g, Value x, Value mu, Value logvar, int dim) {
  Value d = sub(x, mu);
  Value quad = mul(mul(d, d), expv(scale(logvar, -1.0f)));
  Value s = sum(add(logvar, quad));
  return scale(add_scalar(s, static_cast<float>(dim * kLog2Pi)), -0.5f);
}

}  // namespace

GumbelDraw gumbel_softmax_sample(const std::vector<float>& log_pi, float tau,
                                 std::uint64_t seed) {
  if (tau <= 0.0f) throw ConfigError("gumbel_softmax_sample: tau must be > 0");
  GumbelDraw d;
  d.tau = tau;
  Rng rng(seed);
  d.g.resize(log_pi.size());
  for (float& v : d.g) v = static_cast<float>(rng.gumbel());
  // softmax of (log pi + g)/tau in double, max-shifted
  std::vector<double> a(log_pi.size());
  double mx = -1e300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = (static_cast<double>(log_pi[i]) + d.g[i]) / tau;
    mx = std::max(mx, a[i]);
  }
  double den = 0;
  for (double& v : a) {
    v = std::exp(v - mx);
    den += v;
  }
  d.omega.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    d.omega[i] = static_cast<float>(a[i] / den);
  return d;
}

double gumbel_density(const std::vector<double>& omega,
                      const std::vector<double>& pi, double tau) {
  if (tau <= 0.0) throw ConfigError("gumbel_density: tau must be > 0");
  if (omega.size() != pi.size())
    throw ShapeError("gumbel_density: omega/pi size mismatch");
  const int k = static_cast<int>(omega.size());
  for (double w : omega)
    if (!(w > 0.0) || !(w < 1.0))
      throw NumericError("gumbel_density: omega must lie in the simplex interior");
  // log Gamma(k) + (k-1) log tau - k log(sum pi_i omega_i^-tau)
  //   + sum log(pi_i omega_i^-(tau+1))
  double log_sum = -1e300;
  double log_prod = 0;
  for (int i = 0; i < k; ++i) {
    double lt = std::log(static_cast<double>(pi[i])) -
                tau * std::log(static_cast<double>(omega[i]));
    log_sum = std::max(log_sum, lt) +
              std::log1p(std::exp(std::min(log_sum, lt) - std::max(log_sum, lt)));
    log_prod += lt - std::log(static_cast<double>(omega[i]));
  }
  double ld = std::lgamma(k) + (k - 1) * std::log(static_cast<double>(tau)) -
              k * log_sum + log_prod;
  return std::exp(ld);
}

std::vector<double> mixture_posterior(const std::vector<std::vector<float>>& mu,
                                      const std::vector<std::vector<float>>& logvar,
                                      const std::vector<float>& pi,
                                      const std::vector<float>& x) {
  const std::size_t K = mu.size();
  if (logvar.size() != K || pi.size() != K)
    throw ShapeError("mixture_posterior: component count mismatch");
  std::vector<double> lg(K);
  double mx = -1e300;
  for (std::size_t k = 0; k < K; ++k) {
    if (mu[k].size() != x.size() || logvar[k].size() != x.size())
      throw ShapeError("mixture_posterior: dimension mismatch");
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double d = static_cast<double>(x[i]) - mu[k][i];
      s += logvar[k][i] + d * d * std::exp(-static_cast<double>(logvar[k][i]));
    }
    lg[k] = std::log(static_cast<double>(pi[k])) -
            0.5 * (s + static_cast<double>(x.size()) * kLog2Pi);
    mx = std::max(mx, lg[k]);
  }
  double den = 0;
  for (double& v : lg) {
    v = std::exp(v - mx);
    den += v;
  }
  std::vector<double> out(K);
  for (std::size_t k = 0; k < K; ++k) out[k] = lg[k] / den;
  return out;
}

ModeSelector::ModeSelector(ModeSelectorConfig cfg, std::uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  params_.create("ms.pi", Tensor::zeros({1, cfg_.K}));
  init_mlp(params_, "ms.prior", cfg_.K + cfg_.y_dim + cfg_.d_obs, cfg_.hidden,
           2 * cfg_.x_dim, rng);
  // Break component symmetry at init: with identically-initialized mixture
  // components the trainer settles into one broad component covering every
  // mode (uniform responsibilities give the c input no gradient). A larger
  // scale on the one-hot-c input rows makes components distinct from the
  // start so responsibilities can specialize them.
  {
    Tensor& w = params_.slot("ms.prior.l0.w").value;
    for (int r = 0; r < cfg_.K; ++r)
      for (int c = 0; c < cfg_.hidden; ++c) w.at(r, c) *= 3.0f;
  }
  init_mlp(params_, "ms.qx", cfg_.d_z + cfg_.d_obs, cfg_.hidden, 2 * cfg_.x_dim,
           rng);
  init_mlp(params_, "ms.qy", cfg_.d_z + cfg_.d_obs, cfg_.hidden, 2 * cfg_.y_dim,
           rng);
  int dm = cfg_.d_model;
  params_.create("ms.dec.tok.w",
                 normal_init({cfg_.d_obs, dm}, 1.0f / std::sqrt((float)cfg_.d_obs), rng));
  params_.create("ms.dec.tok.b", Tensor::zeros({1, dm}));
  params_.create("ms.dec.x.w",
                 normal_init({cfg_.x_dim, dm}, 1.0f / std::sqrt((float)cfg_.x_dim), rng));
  params_.create("ms.dec.x.b", Tensor::zeros({1, dm}));
  for (int l = 0; l < cfg_.attn_layers; ++l) {
    std::string p = "ms.dec.L" + std::to_string(l);
    params_.create(p + ".ln1.g", Tensor::full({1, dm}, 1.0f));
    params_.create(p + ".ln1.b", Tensor::zeros({1, dm}));
    float s = 1.0f / std::sqrt((float)dm);
    params_.create(p + ".wq", normal_init({dm, dm}, s, rng));
    params_.create(p + ".wk", normal_init({dm, dm}, s, rng));
    params_.create(p + ".wv", normal_init({dm, dm}, s, rng));
    params_.create(p + ".wo", normal_init({dm, dm}, s, rng));
    params_.create(p + ".ln2.g", Tensor::full({1, dm}, 1.0f));
    params_.create(p + ".ln2.b", Tensor::zeros({1, dm}));
    params_.create(p + ".mlp.w1", normal_init({dm, 2 * dm}, s, rng));
    params_.create(p + ".mlp.b1", Tensor::zeros({1, 2 * dm}));
    params_.create(p + ".mlp.w2",
                   normal_init({2 * dm, dm}, 1.0f / std::sqrt(2.0f * dm), rng));
    params_.create(p + ".mlp.b2", Tensor::zeros({1, dm}));
  }
  params_.create("ms.dec.lnf.g", Tensor::full({1, dm}, 1.0f));
  params_.create("ms.dec.lnf.b", Tensor::zeros({1, dm}));
  params_.create("ms.dec.out.w",
                 normal_init({dm, cfg_.d_z}, 1.0f / std::sqrt((float)dm), rng));
  params_.create("ms.dec.out.b", Tensor::zeros({1, cfg_.d_z}));
}

Tensor ModeSelector::obs_tokens(const Featurizer& f, const ViewSet& o) {
  std::vector<float> pooled = f.downsample(o);
  const Tensor& P = f.projection();
  int per_view = Featurizer::kChannels * Featurizer::kPool * Featurizer::kPool;
  Tensor out = Tensor::zeros({kNumViews, f.d_z()});
  for (int v = 0; v < kNumViews; ++v)
    for (int i = 0; i < f.d_z(); ++i) {
      double acc = 0;
      for (int j = 0; j < per_view; ++j)
        acc += static_cast<double>(P.at(i, v * per_view + j)) *
               pooled[v * per_view + j];
      out.at(v, i) = static_cast<float>(acc);
    }
  return out;
}

namespace {

// Decoder: project view tokens + the x token, run pre-LN self-attention
// blocks, read the x-token row out as the embedding mean.
Value decode_forward(Graph& g, const ModeSelectorConfig& cfg, Value tokens,
                     Value xrow) {
  Value T = add_bias(matmul(tokens, g.param("ms.dec.tok.w")),
                     g.param("ms.dec.tok.b"));
  Value X = add_bias(matmul(xrow, g.param("ms.dec.x.w")), g.param("ms.dec.x.b"));
  Value S = concat_rows({T, X});
  for (int l = 0; l < cfg.attn_layers; ++l) {
    std::string p = "ms.dec.L" + std::to_string(l);
    Value a = layer_norm(S, g.param(p + ".ln1.g"), g.param(p + ".ln1.b"));
    Value att = attention(matmul(a, g.param(p + ".wq")),
                          matmul(a, g.param(p + ".wk")),
                          matmul(a, g.param(p + ".wv")), cfg.heads);
    S = add(S, matmul(att, g.param(p + ".wo")));
    Value m = layer_norm(S, g.param(p + ".ln2.g"), g.param(p + ".ln2.b"));
    Value h = gelu(add_bias(matmul(m, g.param(p + ".mlp.w1")),
                            g.param(p + ".mlp.b1")));
    S = add(S, add_bias(matmul(h, g.param(p + ".mlp.w2")),
                        g.param(p + ".mlp.b2")));
  }
  Value f = layer_norm(S, g.param("ms.dec.lnf.g"), g.param("ms.dec.lnf.b"));
  Value xt = slice_rows(f, kNumViews, kNumViews + 1);
  return add_bias(matmul(xt, g.param("ms.dec.out.w")), g.param("ms.dec.out.b"));
}

struct LatentHeads {
  Value mu, logvar;
};

LatentHeads split_heads(Graph& g, const ModeSelectorConfig& cfg, Value out,
                        int dim) {
  LatentHeads h;
  h.mu = slice_cols(out, 0, dim);
  h.logvar = clamp(slice_cols(out, dim, 2 * dim), cfg.logvar_min, cfg.logvar_max);
  (void)g;
  return h;
}

}  // namespace

Value ModeSelector::build_elbo(Graph& g, const std::vector<ElboSample>& batch,
                               std::uint64_t noise_seed, float tau,
                               ElboTerms* terms) const {
  if (batch.empty()) throw StateError("elbo: empty batch");
  if (tau <= 0.0f) throw ConfigError("elbo: tau must be > 0");
  const int K = cfg_.K;
  Value log_pi = log_softmax(g.param("ms.pi"));
  Value zero_y = g.input(Tensor::zeros({1, cfg_.y_dim}));

  Value total;
  ElboTerms acc;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const ElboSample& s = batch[n];
    Rng rng(split_seed(noise_seed, n));
    Tensor ny = Tensor::zeros({1, cfg_.y_dim});
    for (float& v : ny.data) v = static_cast<float>(rng.normal());
    Tensor nx = Tensor::zeros({1, cfg_.x_dim});
    for (float& v : nx.data) v = static_cast<float>(rng.normal());
    Tensor ng = Tensor::zeros({1, K});
    for (float& v : ng.data) v = static_cast<float>(rng.gumbel());

    Value tokens = g.input(s.tokens);
    Value gvec = mean_rows(tokens);
    Value zrow = g.input(row_tensor(s.z));
    Value zin = concat_cols({zrow, gvec});

    LatentHeads qy = split_heads(g, cfg_, mlp_forward(g, "ms.qy", zin), cfg_.y_dim);
    Value y = gaussian_reparam(qy.mu, qy.logvar, g.input(ny));
    LatentHeads qx = split_heads(g, cfg_, mlp_forward(g, "ms.qx", zin), cfg_.x_dim);
    Value x = gaussian_reparam(qx.mu, qx.logvar, g.input(nx));

    // prior components evaluated at one-hot c give the analytic q_c
    std::vector<Value> log_n(K);
    for (int k = 0; k < K; ++k) {
      Tensor onehot = Tensor::zeros({1, K});
      onehot.data[k] = 1.0f;
      Value pin = concat_cols({g.input(onehot), y, gvec});
      LatentHeads pr = split_heads(g, cfg_, mlp_forward(g, "ms.prior", pin),
                                   cfg_.x_dim);
      log_n[k] = log_normal(g, x, pr.mu, pr.logvar, cfg_.x_dim);
    }
    Value logits = add(log_pi, concat_cols(log_n));
    Value log_qc = log_softmax(logits);

    // conditional-prior term: one relaxed draw omega ~ GumbelSoftmax(q_c, tau)
    // feeds the prior net, a single-sample estimate of the responsibility-
    // weighted KL that keeps mode assignment stochastic while tau > 0
    Value omega = gumbel_softmax(log_qc, tau, g.input(ng));
    Value wpin = concat_cols({omega, y, gvec});
    LatentHeads pw = split_heads(g, cfg_, mlp_forward(g, "ms.prior", wpin),
                                 cfg_.x_dim);
    Value x_kl = kl_diag_gaussian(qx.mu, qx.logvar, pw.mu, pw.logvar);
    Value y_kl = kl_diag_gaussian(qy.mu, qy.logvar, zero_y,
                                  g.input(Tensor::zeros({1, cfg_.y_dim})));
    Value c_kl = kl_categorical_logs(log_qc, log_pi);
    Value eps_hat = decode_forward(g, cfg_, tokens, x);
    Value recon = squared_error(eps_hat, zrow);

    acc.recon += g.value(recon).data[0];
    acc.x_kl += g.value(x_kl).data[0];
    acc.y_kl += g.value(y_kl).data[0];
    acc.c_kl += g.value(c_kl).data[0];

    Value sample_loss =
        add(recon, scale(add(add(x_kl, y_kl), c_kl), cfg_.kl_beta));
    total = (n == 0) ? sample_loss : add(total, sample_loss);
  }
  double inv_b = 1.0 / static_cast<double>(batch.size());
  acc.recon *= inv_b;
  acc.x_kl *= inv_b;
  acc.y_kl *= inv_b;
  acc.c_kl *= inv_b;
  acc.total = acc.recon + cfg_.kl_beta * (acc.x_kl + acc.y_kl + acc.c_kl);
  for (auto [name, v] : {std::pair<const char*, double>{"recon", acc.recon},
                         {"x_kl", acc.x_kl},
                         {"y_kl", acc.y_kl},
                         {"c_kl", acc.c_kl}})
    if (!std::isfinite(v))
      throw NumericError(std::string("elbo: non-finite term ") + name);
  if (terms) *terms = acc;
  return scale(total, static_cast<float>(inv_b));
}

ElboTerms ModeSelector::elbo_step(const std::vector<ElboSample>& batch,
                                  std::uint64_t noise_seed, double lr,
                                  float tau) {
  Graph g(&params_);
  ElboTerms terms;
  Value loss = build_elbo(g, batch, noise_seed, tau, &terms);
  if (terms.total > 1e6)
    throw NumericError("mode selector training diverged: loss " +
                       std::to_string(terms.total));
  params_.zero_grad();
  g.backward(loss);
  params_.adam_step(lr);
  return terms;
}

ElboTerms ModeSelector::evaluate(const std::vector<ElboSample>& batch,
                                 std::uint64_t noise_seed, float tau) const {
  Graph g(&params_);
  ElboTerms terms;
  build_elbo(g, batch, noise_seed, tau, &terms);
  return terms;
}

std::vector<double> ModeSelector::c_posterior(const Tensor& tokens,
                                              const std::vector<float>& z) const {
  Graph g(&params_);
  Value tv = g.input(tokens);
  Value gvec = mean_rows(tv);
  Value zin = concat_cols({g.input(row_tensor(z)), gvec});
  LatentHeads qy = split_heads(g, cfg_, mlp_forward(g, "ms.qy", zin), cfg_.y_dim);
  LatentHeads qx = split_heads(g, cfg_, mlp_forward(g, "ms.qx", zin), cfg_.x_dim);
  // copies: later g.input() calls may reallocate the node storage
  Tensor y = g.value(qy.mu);
  Tensor x = g.value(qx.mu);

  std::vector<std::vector<float>> mu(cfg_.K), lv(cfg_.K);
  for (int k = 0; k < cfg_.K; ++k) {
    Tensor onehot = Tensor::zeros({1, cfg_.K});
    onehot.data[k] = 1.0f;
    Value pin = concat_cols({g.input(onehot), g.input(y), gvec});
    LatentHeads pr =
        split_heads(g, cfg_, mlp_forward(g, "ms.prior", pin), cfg_.x_dim);
    mu[k] = g.value(pr.mu).data;
    lv[k] = g.value(pr.logvar).data;
  }
  return mixture_posterior(mu, lv, pi(), x.data);
}

std::vector<float> ModeSelector::infer_mode(const Tensor& tokens, int k) const {
  if (k < 0 || k >= cfg_.K) throw ConfigError("infer_mode: cluster out of range");
  Graph g(&params_);
  Value tv = g.input(tokens);
  Value gvec = mean_rows(tv);
  Tensor onehot = Tensor::zeros({1, cfg_.K});
  onehot.data[k] = 1.0f;
  Value pin = concat_cols(
      {g.input(onehot), g.input(Tensor::zeros({1, cfg_.y_dim})), gvec});
  LatentHeads pr =
      split_heads(g, cfg_, mlp_forward(g, "ms.prior", pin), cfg_.x_dim);
  Value eps = decode_forward(g, cfg_, tv, pr.mu);
  return g.value(eps).data;
}

std::vector<float> ModeSelector::pi() const {
  const Tensor& logits = params_.slot("ms.pi").value;
  std::vector<double> e(logits.data.size());
  double mx = -1e300, den = 0;
  for (std::size_t i = 0; i < e.size(); ++i) mx = std::max(mx, (double)logits.data[i]);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = std::exp(logits.data[i] - mx);
    den += e[i];
  }
  std::vector<float> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = static_cast<float>(e[i] / den);
  return out;
}

std::vector<TrainCurvePoint> train_mode_selector(
    ModeSelector& m, const std::vector<ElboSample>& data, int epochs,
    double lr, std::uint64_t seed, int batch_size) {
  if (data.empty()) throw StateError("train_mode_selector: empty dataset");
  std::vector<TrainCurvePoint> curve;
  if (epochs <= 0) return curve;
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    float frac = epochs > 1 ? static_cast<float>(epoch) / (epochs - 1) : 0.0f;
    float tau =
        m.config().tau_start + frac * (m.config().tau_end - m.config().tau_start);
    // deterministic shuffle
    Rng rng(split_seed(seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);

    ElboTerms epoch_terms;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<ElboSample> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + batch_size); ++i)
        batch.push_back(data[order[i]]);
      ElboTerms t = m.elbo_step(
          batch, split_seed(split_seed(seed, epoch), 1000 + start), lr, tau);
      epoch_terms.total += t.total;
      epoch_terms.recon += t.recon;
      epoch_terms.x_kl += t.x_kl;
      epoch_terms.y_kl += t.y_kl;
      epoch_terms.c_kl += t.c_kl;
      ++batches;
    }
    TrainCurvePoint p;
    p.epoch = epoch;
    p.tau = tau;
    p.terms.total = epoch_terms.total / batches;
    p.terms.recon = epoch_terms.recon / batches;
    p.terms.x_kl = epoch_terms.x_kl / batches;
    p.terms.y_kl = epoch_terms.y_kl / batches;
    p.terms.c_kl = epoch_terms.c_kl / batches;
    curve.push_back(p);
  }
  return curve;
}

void save_loss_curve_csv(const std::vector<TrainCurvePoint>& curve,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot write loss curve " + path);
  out << "epoch,total,recon,x_kl,y_kl,c_kl,tau\n";
  char buf[256];
  for (const TrainCurvePoint& p : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f\n",
                  p.epoch, p.terms.total, p.terms.recon, p.terms.x_kl,
                  p.terms.y_kl, p.terms.c_kl, p.tau);
    out << buf;
  }
}

double cluster_purity(const ModeSelector& m,
                      const std::vector<ElboSample>& samples,
                      const std::vector<int>& labels) {
  if (samples.size() != labels.size())
    throw ShapeError("cluster_purity: samples/labels size mismatch");
  if (samples.empty()) throw StateError("cluster_purity: empty eval set");
  // cluster -> label histogram
  std::vector<std::map<int, int>> hist(m.config().K);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::vector<double> q = m.c_posterior(samples[i].tokens, samples[i].z);
    int c = static_cast<int>(
        std::max_element(q.begin(), q.end()) - q.begin());
    ++hist[c][labels[i]];
  }
  int covered = 0;
  for (const auto& h : hist) {
    int best = 0;
    for (const auto& [label, n] : h) best = std::max(best, n);
    covered += best;
  }
  return static_cast<double>(covered) / static_cast<double>(samples.size());
}

void save_mode_selector(const ModeSelector& m, const std::string& path) {
  std::map<std::string, Tensor> records;
  const ModeSelectorConfig& c = m.config();
  records["ms.config"] =
      Tensor({12}, {static_cast<float>(c.K), static_cast<float>(c.d_z),
                    static_cast<float>(c.d_obs), static_cast<float>(c.y_dim),
                    static_cast<float>(c.x_dim), static_cast<float>(c.d_model),
                    static_cast<float>(c.heads),
                    static_cast<float>(c.attn_layers),
                    static_cast<float>(c.hidden), c.tau_start, c.tau_end,
                    c.kl_beta});
  for (const auto& [name, slot] : m.params().slots())
    records[name] = slot.value;
  save_checkpoint(path, records);
}

ModeSelector load_mode_selector(const std::string& path) {
  std::map<std::string, Tensor> records = load_checkpoint(path);
  auto it = records.find("ms.config");
  if (it == records.end())
    throw ConfigError("mode selector checkpoint missing config record");
  const std::vector<float>& v = it->second.data;
  ModeSelectorConfig c;
  c.K = static_cast<int>(v[0]);
  c.d_z = static_cast<int>(v[1]);
  c.d_obs = static_cast<int>(v[2]);
  c.y_dim = static_cast<int>(v[3]);
  c.x_dim = static_cast<int>(v[4]);
  c.d_model = static_cast<int>(v[5]);
  c.heads = static_cast<int>(v[6]);
  c.attn_layers = static_cast<int>(v[7]);
  c.hidden = static_cast<int>(v[8]);
  c.tau_start = v[9];
  c.tau_end = v[10];
  c.kl_beta = v[11];
  ModeSelector m(c, 0);
  for (auto& [name, slot] : m.params().slots()) {
    auto rec = records.find(name);
    if (rec == records.end())
      throw ConfigError("mode selector checkpoint missing record " + name);
    if (!slot.value.same_shape(rec->second))
      throw ShapeError("mode selector checkpoint shape mismatch for " + name);
    slot.value = rec->second;
  }
  return m;
}

}  // namespace aim
