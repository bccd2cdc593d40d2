#include "aim/action_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "aim/checkpoint.hpp"
#include "aim/rng.hpp"

namespace aim {

namespace {

constexpr float kPi = 3.14159265358979323846f;

Tensor normal_init(std::vector<int> dims, float stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (float& v : t.data) v = stddev * static_cast<float>(rng.normal());
  return t;
}

Tensor row_tensor(const std::vector<float>& v) {
  return Tensor({1, static_cast<int>(v.size())}, v);
}

// out[i] = m[rows[i]]; backward scatter-adds into m's rows.
Value gather_rows(Value m, const std::vector<int>& rows) {
  Graph& g = *m.g;
  const Tensor& src = g.value(m);
  const int C = src.dims.back();
  Tensor out = Tensor::zeros({static_cast<int>(rows.size()), C});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(&src.data[rows[i] * C], C, &out.data[i * C]);
  int id = g.make(std::move(out), {m.id}, "gather_rows",
                  [rows, C](Graph& gg, int self) {
                    const Tensor& go = gg.node(self).grad;
                    Tensor& gi = gg.grad_ref(gg.node(self).ins[0]);
                    for (std::size_t i = 0; i < rows.size(); ++i)
                      for (int c = 0; c < C; ++c)
                        gi.data[rows[i] * C + c] += go.data[i * C + c];
                  });
  return {&g, id};
}

// Reassembles per-patch pixel logits {rows, p*p} into one view's {1, H*W}
// pixel-logit image. slot_rows[s] = the input row holding image patch slot s
// (raster order over the Hp x Wp patch grid of this view).
Value assemble_patches(Value rows_v, const std::vector<int>& slot_rows, int Hp,
                       int Wp, int p) {
  Graph& g = *rows_v.g;
  const Tensor& src = g.value(rows_v);
  const int W = Wp * p;
  Tensor out = Tensor::zeros({1, Hp * p * W});
  for (int s = 0; s < Hp * Wp; ++s) {
    int sy = s / Wp, sx = s % Wp, r = slot_rows[s];
    for (int dy = 0; dy < p; ++dy)
      for (int dx = 0; dx < p; ++dx)
        out.data[(sy * p + dy) * W + sx * p + dx] =
            src.data[r * p * p + dy * p + dx];
  }
  int id = g.make(std::move(out), {rows_v.id}, "assemble_patches",
                  [slot_rows, Hp, Wp, p, W](Graph& gg, int self) {
                    const Tensor& go = gg.node(self).grad;
                    Tensor& gi = gg.grad_ref(gg.node(self).ins[0]);
                    for (int s = 0; s < Hp * Wp; ++s) {
                      int sy = s / Wp, sx = s % Wp, r = slot_rows[s];
                      for (int dy = 0; dy < p; ++dy)
                        for (int dx = 0; dx < p; ++dx)
                          gi.data[r * p * p + dy * p + dx] +=
                              go.data[(sy * p + dy) * W + sx * p + dx];
                    }
                  });
  return {&g, id};
}

}  // namespace

std::array<float, 3> quat_to_euler_zyx(Quat q) {
  float roll = std::atan2(2.0f * (q.w * q.x + q.y * q.z),
                          1.0f - 2.0f * (q.x * q.x + q.y * q.y));
  float s = 2.0f * (q.w * q.y - q.z * q.x);
  float pitch = std::asin(std::clamp(s, -1.0f, 1.0f));
  float yaw = std::atan2(2.0f * (q.w * q.z + q.x * q.y),
                         1.0f - 2.0f * (q.y * q.y + q.z * q.z));
  return {yaw, pitch, roll};
}

Quat euler_zyx_to_quat(const std::array<float, 3>& ypr) {
  Quat qz = Quat::from_axis_angle({0, 0, 1}, ypr[0]);
  Quat qy = Quat::from_axis_angle({0, 1, 0}, ypr[1]);
  Quat qx = Quat::from_axis_angle({1, 0, 0}, ypr[2]);
  return (qz * qy * qx).normalized();
}

int rot_bin(float angle, int bins) {
  if (bins <= 0) throw ConfigError("rot_bin: bins must be positive");
  float step = 2.0f * kPi / bins;
  int b = static_cast<int>(std::lround(angle / step)) % bins;
  return b < 0 ? b + bins : b;
}

float rot_bin_center(int bin, int bins) {
  float a = bin * 2.0f * kPi / bins;
  return a >= kPi ? a - 2.0f * kPi : a;
}

ActionPredictor::ActionPredictor(ActionPredictorConfig cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg_.H % cfg_.patch != 0 || cfg_.W % cfg_.patch != 0)
    throw ConfigError("action predictor: view size not divisible by patch");
  if (cfg_.d_model % cfg_.heads != 0)
    throw ConfigError("action predictor: d_model not divisible by heads");
  Rng rng(seed);
  const int dm = cfg_.d_model;
  const int pvec = cfg_.patch * cfg_.patch * kViewChannels;
  const int P = patches_per_view();
  params_.create("ap.patch.w",
                 normal_init({pvec, dm}, 1.0f / std::sqrt((float)pvec), rng));
  params_.create("ap.patch.b", Tensor::zeros({1, dm}));
  params_.create("ap.pos", normal_init({kNumViews * P, dm}, 0.02f, rng));
  params_.create("ap.eps.w",
                 normal_init({cfg_.d_z, dm}, 1.0f / std::sqrt((float)cfg_.d_z), rng));
  params_.create("ap.eps.b", Tensor::zeros({1, dm}));
  params_.create("ap.grip", normal_init({2, dm}, 0.02f, rng));
  params_.create("ap.phase", normal_init({4, dm}, 0.02f, rng));
  for (int l = 0; l < cfg_.layers; ++l) {
    std::string p = "ap.L" + std::to_string(l);
    float s = 1.0f / std::sqrt((float)dm);
    params_.create(p + ".ln1.g", Tensor::full({1, dm}, 1.0f));
    params_.create(p + ".ln1.b", Tensor::zeros({1, dm}));
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
  params_.create("ap.lnf.g", Tensor::full({1, dm}, 1.0f));
  params_.create("ap.lnf.b", Tensor::zeros({1, dm}));
  params_.create("ap.heat.w",
                 normal_init({dm, cfg_.patch * cfg_.patch},
                             1.0f / std::sqrt((float)dm), rng));
  params_.create("ap.heat.b", Tensor::zeros({1, cfg_.patch * cfg_.patch}));
  for (int a = 0; a < 3; ++a) {
    std::string p = "ap.rot" + std::to_string(a);
    params_.create(p + ".w",
                   normal_init({dm, cfg_.rot_bins}, 1.0f / std::sqrt((float)dm), rng));
    params_.create(p + ".b", Tensor::zeros({1, cfg_.rot_bins}));
  }
  params_.create("ap.grip_head.w",
                 normal_init({dm, 1}, 1.0f / std::sqrt((float)dm), rng));
  params_.create("ap.grip_head.b", Tensor::zeros({1, 1}));
}

ApForward ActionPredictor::forward_graph(
    Graph& g, const ViewSet& views, const std::vector<float>& eps,
    int gripper_state, int phase, const std::vector<int>* patch_order) const {
  const int p = cfg_.patch;
  const int Hp = cfg_.H / p, Wp = cfg_.W / p, P = Hp * Wp;
  const int N = kNumViews * P;
  if (static_cast<int>(eps.size()) != cfg_.d_z)
    throw ShapeError("action predictor: eps dimension mismatch");
  if (gripper_state < 0 || gripper_state > 1)
    throw ConfigError("action predictor: gripper state must be 0 or 1");
  if (phase < 0 || phase > 3)
    throw ConfigError("action predictor: phase out of range");
  for (const View& v : views.views)
    if (v.H != cfg_.H || v.W != cfg_.W)
      throw ShapeError("action predictor: view resolution mismatch");

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  if (patch_order) {
    if (static_cast<int>(patch_order->size()) != N)
      throw ShapeError("action predictor: patch order size mismatch");
    order = *patch_order;
  }

  // patch content matrix: row i holds the pixels of patch slot order[i]
  // (slot = view * P + patch raster index), channel-major within the patch
  const int pvec = p * p * kViewChannels;
  Tensor patches = Tensor::zeros({N, pvec});
  for (int i = 0; i < N; ++i) {
    int slot = order[i];
    const View& v = views.views[slot / P];
    int s = slot % P, sy = s / Wp, sx = s % Wp;
    for (int c = 0; c < kViewChannels; ++c)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          patches.data[i * pvec + (c * p + dy) * p + dx] =
              v.at(c, sy * p + dy, sx * p + dx);
  }

  Value tok = add_bias(matmul(g.input(std::move(patches)), g.param("ap.patch.w")),
                       g.param("ap.patch.b"));
  tok = add(tok, gather_rows(g.param("ap.pos"), order));
  Value eps_tok = add_bias(matmul(g.input(row_tensor(eps)), g.param("ap.eps.w")),
                           g.param("ap.eps.b"));
  Value grip_tok = slice_rows(g.param("ap.grip"), gripper_state, gripper_state + 1);
  Value phase_tok = slice_rows(g.param("ap.phase"), phase, phase + 1);
  Value S = concat_rows({tok, eps_tok, grip_tok, phase_tok});

  for (int l = 0; l < cfg_.layers; ++l) {
    std::string pre = "ap.L" + std::to_string(l);
    Value a = layer_norm(S, g.param(pre + ".ln1.g"), g.param(pre + ".ln1.b"));
    Value att = attention(matmul(a, g.param(pre + ".wq")),
                          matmul(a, g.param(pre + ".wk")),
                          matmul(a, g.param(pre + ".wv")), cfg_.heads);
    S = add(S, matmul(att, g.param(pre + ".wo")));
    Value m = layer_norm(S, g.param(pre + ".ln2.g"), g.param(pre + ".ln2.b"));
    Value h = gelu(add_bias(matmul(m, g.param(pre + ".mlp.w1")),
                            g.param(pre + ".mlp.b1")));
    S = add(S, add_bias(matmul(h, g.param(pre + ".mlp.w2")),
                        g.param(pre + ".mlp.b2")));
  }
  Value out = layer_norm(S, g.param("ap.lnf.g"), g.param("ap.lnf.b"));

  ApForward f;
  Value heat = add_bias(matmul(slice_rows(out, 0, N), g.param("ap.heat.w")),
                        g.param("ap.heat.b"));
  // invert the feed order: slot_rows[slot] = token row carrying that patch
  std::vector<int> slot_rows(N);
  for (int i = 0; i < N; ++i) slot_rows[order[i]] = i;
  for (int v = 0; v < kNumViews; ++v) {
    std::vector<int> view_rows(slot_rows.begin() + v * P,
                               slot_rows.begin() + (v + 1) * P);
    f.heat_logits[v] = assemble_patches(heat, view_rows, Hp, Wp, p);
  }
  Value eps_out = slice_rows(out, N, N + 1);
  for (int a = 0; a < 3; ++a) {
    std::string pr = "ap.rot" + std::to_string(a);
    f.rot_logits[a] =
        add_bias(matmul(eps_out, g.param(pr + ".w")), g.param(pr + ".b"));
  }
  Value grip_out = slice_rows(out, N + 1, N + 2);
  f.grip_logit = add_bias(matmul(grip_out, g.param("ap.grip_head.w")),
                          g.param("ap.grip_head.b"));
  return f;
}

ActionPrediction ActionPredictor::predict(const ViewSet& views,
                                          const std::vector<float>& eps,
                                          int gripper_state, int phase) const {
  Graph g(&params_);
  ApForward f = forward_graph(g, views, eps, gripper_state, phase);
  ActionPrediction pred;
  for (int v = 0; v < kNumViews; ++v) {
    const Tensor& logits = g.value(f.heat_logits[v]);
    Heatmap& hm = pred.heatmaps[v];
    hm.H = cfg_.H;
    hm.W = cfg_.W;
    hm.w.resize(logits.data.size());
    double mx = -1e300, den = 0;
    for (float x : logits.data) mx = std::max(mx, (double)x);
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
      double e = std::exp((double)logits.data[i] - mx);
      hm.w[i] = static_cast<float>(e);
      den += e;
    }
    for (float& x : hm.w) x = static_cast<float>(x / den);
  }
  std::array<float, 3> angles{};
  for (int a = 0; a < 3; ++a) {
    pred.rot_logits[a] = g.value(f.rot_logits[a]).data;
    int best = static_cast<int>(
        std::max_element(pred.rot_logits[a].begin(), pred.rot_logits[a].end()) -
        pred.rot_logits[a].begin());
    angles[a] = rot_bin_center(best, cfg_.rot_bins);
  }
  pred.grip_logit = g.value(f.grip_logit).data[0];

  Vec3 pn = decode_position(pred.heatmaps, grid_candidates(cfg_.grid_n));
  pred.decoded.p = denormalize(pn, views.center, views.scale);
  pred.decoded.R = euler_zyx_to_quat(angles);
  pred.decoded.q = pred.grip_logit > 0.0f ? 1 : 0;
  return pred;
}

Value ActionPredictor::bc_loss(Graph& g, const ApForward& f,
                               const KeyPose& target, const ViewSet& frame,
                               BcTerms* terms) const {
  if (frame.scale < 1e-9f) throw NumericError("bc_loss: bad frame scale");
  Vec3 pn = (1.0f / frame.scale) * (target.p - frame.center);
  Value pos_ce;
  for (int v = 0; v < kNumViews; ++v) {
    Heatmap tgt = encode_heatmap(pn, v, cfg_.H, cfg_.W, cfg_.sigma_px);
    Value ce = cross_entropy(f.heat_logits[v],
                             g.input(Tensor({1, cfg_.H * cfg_.W}, tgt.w)));
    pos_ce = (v == 0) ? ce : add(pos_ce, ce);
  }
  std::array<float, 3> ypr = quat_to_euler_zyx(target.R);
  Value rot_ce;
  for (int a = 0; a < 3; ++a) {
    Tensor onehot = Tensor::zeros({1, cfg_.rot_bins});
    onehot.data[rot_bin(ypr[a], cfg_.rot_bins)] = 1.0f;
    Value ce = cross_entropy(f.rot_logits[a], g.input(std::move(onehot)));
    rot_ce = (a == 0) ? ce : add(rot_ce, ce);
  }
  Value grip_ce = bce_with_logit(f.grip_logit, static_cast<float>(target.q));
  Value total = add(add(pos_ce, rot_ce), grip_ce);
  if (terms) {
    terms->pos_ce = g.value(pos_ce).data[0];
    terms->rot_ce = g.value(rot_ce).data[0];
    terms->grip_ce = g.value(grip_ce).data[0];
    terms->total = g.value(total).data[0];
  }
  return total;
}

int gripper_state_before(const std::array<KeyPose, 4>& keyposes, int phase) {
  if (phase < 0 || phase > 3) throw ConfigError("gripper_state_before: phase");
  return phase == 0 ? 0 : keyposes[phase - 1].q;
}

std::vector<BcCurvePoint> train_bc(ActionPredictor& ap, const Dataset& ds,
                                   ModeSelector* ms, const Featurizer* feat,
                                   int epochs, double lr, std::uint64_t seed,
                                   bool joint, int batch_size,
                                   double elbo_lr) {
  if (ds.records.empty()) throw StateError("train_bc: empty dataset");
  if (joint && (!ms || !feat))
    throw ConfigError("train_bc: joint training needs mode selector + featurizer");
  std::vector<BcCurvePoint> curve;
  if (epochs <= 0) return curve;
  if (elbo_lr < 0) elbo_lr = lr;

  const std::size_t R = ds.records.size();
  std::vector<std::pair<int, int>> samples;  // (record, phase)
  for (std::size_t r = 0; r < R; ++r)
    for (int ph = 0; ph < 4; ++ph)
      samples.emplace_back(static_cast<int>(r), ph);

  std::vector<Tensor> tokens(R);
  if (joint)
    for (std::size_t r = 0; r < R; ++r)
      tokens[r] = ModeSelector::obs_tokens(*feat, ds.records[r].o_init);

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // per-record eps: ground-truth z when pre-training, the selector's
    // deterministic decode of the argmax-posterior cluster when joint
    // (recomputed each epoch since the selector moves under joint training)
    std::vector<std::vector<float>> eps(R);
    for (std::size_t r = 0; r < R; ++r) {
      if (!joint) {
        eps[r] = ds.records[r].z.z;
      } else {
        std::vector<double> q = ms->c_posterior(tokens[r], ds.records[r].z.z);
        int k = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
        eps[r] = ms->infer_mode(tokens[r], k);
      }
    }

    Rng rng(split_seed(seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);

    BcCurvePoint pt;
    pt.epoch = epoch;
    int batches = 0;
    double elbo_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::size_t stop = std::min(order.size(), start + (std::size_t)batch_size);
      Graph g(&ap.params());
      Value loss;
      BcTerms batch_terms;
      std::vector<std::size_t> batch_records;
      for (std::size_t i = start; i < stop; ++i) {
        auto [r, ph] = samples[order[i]];
        const Trajectory& t = ds.records[r];
        ApForward f = ap.forward_graph(g, t.obs[ph], eps[r],
                                       gripper_state_before(t.keyposes, ph), ph);
        BcTerms st;
        Value l = ap.bc_loss(g, f, t.keyposes[ph], t.obs[ph], &st);
        batch_terms.pos_ce += st.pos_ce;
        batch_terms.rot_ce += st.rot_ce;
        batch_terms.grip_ce += st.grip_ce;
        batch_terms.total += st.total;
        loss = (i == start) ? l : add(loss, l);
        batch_records.push_back(r);
      }
      double inv = 1.0 / static_cast<double>(stop - start);
      loss = scale(loss, static_cast<float>(inv));
      batch_terms.pos_ce *= inv;
      batch_terms.rot_ce *= inv;
      batch_terms.grip_ce *= inv;
      batch_terms.total *= inv;
      if (!std::isfinite(batch_terms.total) || batch_terms.total > 1e6)
        throw NumericError("bc training diverged: loss " +
                           std::to_string(batch_terms.total));
      ap.params().zero_grad();
      g.backward(loss);
      ap.params().adam_step(lr);

      if (joint && elbo_lr > 0) {
        // the selector sees gradients only from its own ELBO on this batch's
        // records; eps entered the action graph as a plain input (exact
        // stop-gradient)
        std::sort(batch_records.begin(), batch_records.end());
        batch_records.erase(
            std::unique(batch_records.begin(), batch_records.end()),
            batch_records.end());
        std::vector<ElboSample> es;
        for (std::size_t r : batch_records) {
          ElboSample s;
          s.tokens = tokens[r];
          s.z = ds.records[r].z.z;
          es.push_back(std::move(s));
        }
        ElboTerms et = ms->elbo_step(
            es, split_seed(split_seed(seed, epoch), 5000 + start), elbo_lr,
            ms->config().tau_end);
        elbo_sum += et.total;
      }

      pt.terms.pos_ce += batch_terms.pos_ce;
      pt.terms.rot_ce += batch_terms.rot_ce;
      pt.terms.grip_ce += batch_terms.grip_ce;
      pt.terms.total += batch_terms.total;
      ++batches;
    }
    pt.terms.pos_ce /= batches;
    pt.terms.rot_ce /= batches;
    pt.terms.grip_ce /= batches;
    pt.terms.total /= batches;
    pt.elbo = elbo_sum / batches;
    curve.push_back(pt);
  }
  return curve;
}

void save_bc_curve_csv(const std::vector<BcCurvePoint>& curve,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot write loss curve " + path);
  out << "epoch,total,pos_ce,rot_ce,grip_ce,elbo\n";
  char buf[256];
  for (const BcCurvePoint& p : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", p.epoch,
                  p.terms.total, p.terms.pos_ce, p.terms.rot_ce,
                  p.terms.grip_ce, p.elbo);
    out << buf;
  }
}

Trajectory rollout_policy(const CollectEnv& env, const PolicyFactory& make,
                          std::uint64_t seed) {
  Trajectory t;
  t.object_id = env.spec.name;
  t.seed = seed;
  t.source = Source::Random;
  t.state_init = env.start;
  t.o_init = env.observe(env.start, true, split_seed(seed, 0));
  Policy pol = make(t.o_init);

  WorldState state = env.start;
  int grip = 0;
  for (int phase = 0; phase < 4; ++phase) {
    t.obs[phase] = env.observe(state, false, split_seed(seed, 10 + phase));
    KeyPose a = pol(t.obs[phase], phase, grip);
    t.keyposes[phase] = a;
    StepResult sr = step_keypose(env.spec, state, a, phase, env.sim);
    if (!sr.ok) {
      t.valid = false;
      t.success = false;
      t.state_final = state;
      return t;
    }
    state = sr.state;
    grip = a.q;
  }
  t.state_final = state;
  t.o_final = env.observe(state, true, split_seed(seed, 1));
  if (env.featurizer) {
    t.z = task_embedding(*env.featurizer, t.o_init, t.o_final);
    t.z.source_pair = static_cast<std::int64_t>(seed);
  }
  t.success = dof_success(env.spec, t.state_init, t.state_final,
                          env.sim.success_frac);
  return t;
}

Trajectory rollout(const CollectEnv& env, const ModeSelector& ms,
                   const ActionPredictor& ap, int k, std::uint64_t seed) {
  if (!env.featurizer) throw StateError("rollout: env has no featurizer");
  Trajectory t = rollout_policy(
      env,
      [&](const ViewSet& o_init) -> Policy {
        Tensor tokens = ModeSelector::obs_tokens(*env.featurizer, o_init);
        std::vector<float> eps = ms.infer_mode(tokens, k);
        return [&ap, eps](const ViewSet& obs, int phase, int grip) {
          return ap.predict(obs, eps, grip, phase).decoded;
        };
      },
      seed);
  t.cluster_label = k;
  return t;
}

void save_action_predictor(const ActionPredictor& ap, const std::string& path) {
  std::map<std::string, Tensor> records;
  const ActionPredictorConfig& c = ap.config();
  records["ap.config"] = Tensor(
      {10}, {static_cast<float>(c.H), static_cast<float>(c.W),
             static_cast<float>(c.patch), static_cast<float>(c.d_model),
             static_cast<float>(c.heads), static_cast<float>(c.layers),
             static_cast<float>(c.rot_bins), static_cast<float>(c.d_z),
             c.sigma_px, static_cast<float>(c.grid_n)});
  for (const auto& [name, slot] : ap.params().slots())
    records[name] = slot.value;
  save_checkpoint(path, records);
}

ActionPredictor load_action_predictor(const std::string& path) {
  std::map<std::string, Tensor> records = load_checkpoint(path);
  auto it = records.find("ap.config");
  if (it == records.end())
    throw ConfigError("action predictor checkpoint missing config record");
  const std::vector<float>& v = it->second.data;
  ActionPredictorConfig c;
  c.H = static_cast<int>(v[0]);
  c.W = static_cast<int>(v[1]);
  c.patch = static_cast<int>(v[2]);
  c.d_model = static_cast<int>(v[3]);
  c.heads = static_cast<int>(v[4]);
  c.layers = static_cast<int>(v[5]);
  c.rot_bins = static_cast<int>(v[6]);
  c.d_z = static_cast<int>(v[7]);
  c.sigma_px = v[8];
  c.grid_n = static_cast<int>(v[9]);
  ActionPredictor ap(c, 0);
  for (auto& [name, slot] : ap.params().slots()) {
    auto rec = records.find(name);
    if (rec == records.end())
      throw ConfigError("action predictor checkpoint missing record " + name);
    if (!slot.value.same_shape(rec->second))
      throw ShapeError("action predictor checkpoint shape mismatch for " + name);
    slot.value = rec->second;
  }
  return ap;
}

}  // namespace aim
