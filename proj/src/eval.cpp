#include "aim/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "aim/error.hpp"
#include "aim/rng.hpp"
#include "nlohmann/json.hpp"

namespace aim {

using json = nlohmann::json;

ModeLabel executed_mode(const ObjectSpec& spec, const WorldState& init,
                        const WorldState& final_state, float frac) {
  if (init.dof.size() != spec.parts.size() ||
      final_state.dof.size() != spec.parts.size())
    throw ShapeError("executed_mode: DoF count does not match object parts");
  int best = -1;
  float best_norm = 0, best_delta = 0;
  for (std::size_t p = 0; p < spec.parts.size(); ++p) {
    float range = spec.parts[p].d_max - spec.parts[p].d_min;
    if (range <= 0) continue;
    float delta = final_state.dof[p] - init.dof[p];
    float norm = std::fabs(delta) / range;
    if (norm > best_norm) {
      best_norm = norm;
      best_delta = delta;
      best = static_cast<int>(p);
    }
  }
  if (best < 0 || best_norm <= frac) return {};
  return {best, best_delta > 0 ? 1 : -1};
}

std::string mode_label_str(const ModeLabel& m) {
  if (m.part < 0) return "nothing";
  return "part" + std::to_string(m.part) + (m.dir > 0 ? "+" : "-");
}

RolloutFn model_rollout_fn(const ModeSelector& ms, const ActionPredictor& ap) {
  return [&ms, &ap](const CollectEnv& env, int k, std::uint64_t seed) {
    return rollout(env, ms, ap, k, seed);
  };
}

// ---------------------------------------------------------------------------

SsrReport eval_ssr(const std::vector<const CollectEnv*>& envs,
                   const RolloutFn& roll, int K, int n_per_object,
                   std::uint64_t seed, const std::string& split) {
  if (K <= 0) throw ConfigError("eval_ssr: K must be positive");
  if (n_per_object <= 0)
    throw ConfigError("eval_ssr: n_per_object must be positive");
  if (envs.empty()) throw StateError("eval_ssr: no environments");

  SsrReport rep;
  rep.split = split;
  for (std::size_t oi = 0; oi < envs.size(); ++oi) {
    const CollectEnv& env = *envs[oi];
    SsrEntry e;
    e.object_id = env.spec.name;
    Rng kr(split_seed(seed, 1000 + oi));
    for (int i = 0; i < n_per_object; ++i) {
      int k = static_cast<int>(kr.below(static_cast<std::uint64_t>(K)));
      Trajectory t = roll(env, k, split_seed(split_seed(seed, oi), i));
      ++e.samples;
      if (t.success) ++e.successes;
    }
    e.ssr = static_cast<double>(e.successes) / e.samples;
    rep.successes += e.successes;
    rep.samples += e.samples;
    rep.per_object.push_back(std::move(e));
  }
  rep.ssr = static_cast<double>(rep.successes) / rep.samples;
  return rep;
}

// ---------------------------------------------------------------------------

ModeSsrReport eval_mode_ssr(const CollectEnv& env, const RolloutFn& roll,
                            int K, int n_per_cluster, std::uint64_t seed) {
  if (K <= 0) throw ConfigError("eval_mode_ssr: K must be positive");
  if (n_per_cluster <= 0)
    throw ConfigError("eval_mode_ssr: n_per_cluster must be positive");

  ModeSsrReport rep;
  rep.object_id = env.spec.name;
  rep.n_per_cluster = n_per_cluster;
  for (int k = 0; k < K; ++k) {
    ClusterModeStats cs;
    cs.k = k;
    std::map<ModeLabel, int> succ;
    for (int i = 0; i < n_per_cluster; ++i) {
      Trajectory t = roll(env, k, split_seed(split_seed(seed, k), i));
      ModeLabel m = executed_mode(env.spec, t.state_init, t.state_final);
      ++cs.histogram[m];
      if (t.success) ++succ[m];
      ++cs.samples;
    }
    for (const auto& [m, n] : cs.histogram)
      if (n > cs.dominant_count) {  // map order breaks ties to smallest label
        cs.dominant = m;
        cs.dominant_count = n;
      }
    cs.dominant_successes = succ.count(cs.dominant) ? succ[cs.dominant] : 0;
    cs.dominant_ssr = static_cast<double>(cs.dominant_successes) / cs.samples;
    rep.clusters.push_back(std::move(cs));
  }
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return rep.clusters[a].dominant_ssr > rep.clusters[b].dominant_ssr;
  });
  rep.first_cluster = order[0];
  if (K > 1) rep.second_cluster = order[1];
  return rep;
}

// ---------------------------------------------------------------------------

float resolve_d_eps(const ObjectSpec& spec, const GroundingTarget& t) {
  if (t.part < 0 || t.part >= static_cast<int>(spec.parts.size()))
    throw ConfigError("grounding: target part out of range");
  if (t.d_eps >= 0) return t.d_eps;
  return 0.15f * (spec.parts[t.part].d_max - spec.parts[t.part].d_min);
}

float sparse_reward(const ObjectSpec& spec, const GroundingTarget& t,
                    const WorldState& final_state) {
  float eps = resolve_d_eps(spec, t);
  if (t.part >= static_cast<int>(final_state.dof.size()))
    throw ShapeError("sparse_reward: state has too few DoFs");
  return std::fabs(final_state.dof[t.part] - t.d_g) < eps ? 1.0f : 0.0f;
}

GroundingRun ucb1_bandit(int K, const ArmRewardFn& reward, int iterations,
                         std::uint64_t seed) {
  if (K <= 0) throw ConfigError("ucb1: K must be positive");
  if (iterations < K)
    throw ConfigError("ucb1: need at least one pull per arm");

  GroundingRun run;
  run.K = K;
  run.pulls.assign(K, 0);
  run.reward_sums.assign(K, 0);
  for (int t = 0; t < iterations; ++t) {
    int arm;
    if (t < K) {
      arm = t;  // initial sweep: one pull per arm
    } else {
      double best = -1e300;
      arm = 0;
      for (int a = 0; a < K; ++a) {
        double mean = static_cast<double>(run.reward_sums[a]) / run.pulls[a];
        // Hoeffding-style radius sqrt(ln t / 2n); the classical 2 ln t / n
        // numerator over-explores 8 arms on a 50-pull horizon
        double bonus = std::sqrt(std::log(t + 1.0) / (2.0 * run.pulls[a]));
        if (mean + bonus > best) {
          best = mean + bonus;
          arm = a;
        }
      }
    }
    float r = reward(arm, split_seed(seed, t));
    if (r != 0.0f && r != 1.0f)
      throw NumericError("ucb1: reward must be binary");
    ++run.pulls[arm];
    run.reward_sums[arm] += static_cast<int>(r);
    run.arm_history.push_back(arm);
    run.reward_curve.push_back(r);
  }
  run.best_arm = static_cast<int>(
      std::max_element(run.pulls.begin(), run.pulls.end()) -
      run.pulls.begin());
  return run;
}

GroundingRun ground_bandit(const CollectEnv& env, const RolloutFn& roll, int K,
                           const GroundingTarget& target, int iterations,
                           std::uint64_t seed) {
  float eps = resolve_d_eps(env.spec, target);
  const PartSpec& part = env.spec.parts[target.part];
  if (target.d_g < part.d_min - eps || target.d_g > part.d_max + eps) {
    std::cerr << "warning: grounding target d_g=" << target.d_g
              << " unreachable for part " << target.part << " (range ["
              << part.d_min << ", " << part.d_max << "], eps " << eps
              << "); returning zero curve\n";
    GroundingRun run;
    run.K = K;
    run.target = target;
    run.pulls.assign(K, 0);
    run.reward_sums.assign(K, 0);
    run.reward_curve.assign(iterations, 0.0f);
    run.unreachable = true;
    return run;
  }
  GroundingRun run = ucb1_bandit(
      K,
      [&](int arm, std::uint64_t s) {
        Trajectory t = roll(env, arm, s);
        return sparse_reward(env.spec, target, t.state_final);
      },
      iterations, seed);
  run.target = target;
  return run;
}

// ---------------------------------------------------------------------------

CemRun ground_cem(const EpsRewardFn& reward, int dim, int pop, int elite,
                  int iterations, std::uint64_t seed, float init_std,
                  float ridge) {
  if (dim <= 0) throw ConfigError("cem: dim must be positive");
  if (pop <= 0) throw ConfigError("cem: pop must be positive");
  if (elite <= 0 || elite > pop)
    throw ConfigError("cem: elite must be in [1, pop]");

  CemRun run;
  run.mean.assign(dim, 0.0f);
  run.stddev.assign(dim, init_std);
  for (int it = 0; it < iterations; ++it) {
    Rng rng(split_seed(seed, it));
    std::vector<std::vector<float>> cand(pop, std::vector<float>(dim));
    std::vector<double> score(pop);
    double mean_r = 0;
    for (int j = 0; j < pop; ++j) {
      for (int d = 0; d < dim; ++d)
        cand[j][d] = run.mean[d] +
                     run.stddev[d] * static_cast<float>(rng.normal());
      score[j] = reward(cand[j], split_seed(split_seed(seed, it), j));
      mean_r += score[j];
    }
    run.reward_curve.push_back(static_cast<float>(mean_r / pop));

    std::vector<int> order(pop);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] > score[b]; });
    for (int d = 0; d < dim; ++d) {
      double m = 0;
      for (int e = 0; e < elite; ++e) m += cand[order[e]][d];
      m /= elite;
      double var = 0;
      for (int e = 0; e < elite; ++e) {
        double dd = cand[order[e]][d] - m;
        var += dd * dd;
      }
      var /= elite;
      // ridge re-inflation keeps the search from collapsing to a point
      var = std::max(var, static_cast<double>(ridge) * ridge);
      run.mean[d] = static_cast<float>(m);
      run.stddev[d] = static_cast<float>(std::sqrt(var));
    }
    run.mean_history.push_back(run.mean);
  }
  return run;
}

EpsRewardFn model_eps_reward(const CollectEnv& env, const ActionPredictor& ap,
                             const GroundingTarget& target) {
  return [&env, &ap, target](const std::vector<float>& eps,
                             std::uint64_t seed) -> double {
    Trajectory t = rollout_policy(
        env,
        [&](const ViewSet&) -> Policy {
          return [&ap, eps](const ViewSet& obs, int phase, int grip) {
            return ap.predict(obs, eps, grip, phase).decoded;
          };
        },
        seed);
    return sparse_reward(env.spec, target, t.state_final);
  };
}

// ---------------------------------------------------------------------------

namespace {
std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw StateError("cannot write " + path);
  return out;
}
}  // namespace

void save_ssr_csv(const SsrReport& r, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "object,split,successes,samples,ssr\n";
  for (const SsrEntry& e : r.per_object)
    out << e.object_id << "," << r.split << "," << e.successes << ","
        << e.samples << "," << e.ssr << "\n";
  out << "TOTAL," << r.split << "," << r.successes << "," << r.samples << ","
      << r.ssr << "\n";
}

void save_mode_ssr_csv(const ModeSsrReport& r, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "object,cluster,samples,dominant_mode,dominant_count,"
         "dominant_successes,dominant_ssr,histogram\n";
  for (const ClusterModeStats& c : r.clusters) {
    out << r.object_id << "," << c.k << "," << c.samples << ","
        << mode_label_str(c.dominant) << "," << c.dominant_count << ","
        << c.dominant_successes << "," << c.dominant_ssr << ",";
    bool first = true;
    for (const auto& [m, n] : c.histogram) {
      if (!first) out << ";";
      out << mode_label_str(m) << ":" << n;
      first = false;
    }
    out << "\n";
  }
}

void save_reward_curve_csv(const GroundingRun& r, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "iteration,reward,mean_reward\n";
  double cum = 0;
  for (std::size_t i = 0; i < r.reward_curve.size(); ++i) {
    cum += r.reward_curve[i];
    out << i << "," << r.reward_curve[i] << "," << cum / (i + 1) << "\n";
  }
}

void save_cem_curve_csv(const CemRun& r, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "iteration,mean_reward\n";
  for (std::size_t i = 0; i < r.reward_curve.size(); ++i)
    out << i << "," << r.reward_curve[i] << "\n";
}

std::string ssr_json(const SsrReport& r) {
  json j;
  j["split"] = r.split;
  j["successes"] = r.successes;
  j["samples"] = r.samples;
  j["ssr"] = r.ssr;
  j["per_object"] = json::array();
  for (const SsrEntry& e : r.per_object)
    j["per_object"].push_back({{"object", e.object_id},
                               {"successes", e.successes},
                               {"samples", e.samples},
                               {"ssr", e.ssr}});
  return j.dump(2);
}

std::string mode_ssr_json(const ModeSsrReport& r) {
  json j;
  j["object"] = r.object_id;
  j["n_per_cluster"] = r.n_per_cluster;
  j["first_cluster"] = r.first_cluster;
  j["second_cluster"] = r.second_cluster;
  j["clusters"] = json::array();
  for (const ClusterModeStats& c : r.clusters) {
    json h = json::object();
    for (const auto& [m, n] : c.histogram) h[mode_label_str(m)] = n;
    j["clusters"].push_back({{"k", c.k},
                             {"samples", c.samples},
                             {"dominant", mode_label_str(c.dominant)},
                             {"dominant_count", c.dominant_count},
                             {"dominant_successes", c.dominant_successes},
                             {"dominant_ssr", c.dominant_ssr},
                             {"histogram", h}});
  }
  return j.dump(2);
}

std::string grounding_json(const GroundingRun& r) {
  json j;
  j["K"] = r.K;
  j["target"] = {{"part", r.target.part},
                 {"d_g", r.target.d_g},
                 {"d_eps", r.target.d_eps}};
  j["pulls"] = r.pulls;
  j["reward_sums"] = r.reward_sums;
  j["best_arm"] = r.best_arm;
  j["unreachable"] = r.unreachable;
  j["iterations"] = r.reward_curve.size();
  double cum = 0;
  for (float x : r.reward_curve) cum += x;
  j["mean_reward"] =
      r.reward_curve.empty() ? 0.0 : cum / r.reward_curve.size();
  return j.dump(2);
}

void append_rollout_jsonl(std::ostream& out, const ObjectSpec& spec,
                          const Trajectory& t, int k) {
  json j;
  j["object"] = spec.name;
  j["k"] = k;
  j["seed"] = t.seed;
  j["valid"] = t.valid;
  j["success"] = t.success;
  std::vector<float> deltas;
  for (std::size_t p = 0; p < t.state_final.dof.size(); ++p)
    deltas.push_back(t.state_final.dof[p] -
                     (p < t.state_init.dof.size() ? t.state_init.dof[p] : 0));
  j["dof_delta"] = deltas;
  j["executed_mode"] =
      mode_label_str(executed_mode(spec, t.state_init, t.state_final));
  out << j.dump() << "\n";
}

}  // namespace aim
