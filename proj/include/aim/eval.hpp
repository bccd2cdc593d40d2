#pragma once

// Evaluation metrics and interaction-mode grounding: sample success rate
// (SSR) under uniform cluster sampling, per-cluster executed-mode histograms
// with dominant-mode SSR, a UCB1 bandit that grounds a DoF target to a
// cluster, and a cross-entropy-method baseline over continuous embeddings.

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "aim/action_predictor.hpp"
#include "aim/collect.hpp"
#include "aim/mode_selector.hpp"
#include "aim/sim.hpp"

namespace aim {

// Executed interaction mode of a rollout: the part whose DoF moved the most
// (normalized by joint range) and the sign of that motion. part == -1 is the
// "nothing happened" label, used when no part moved more than `frac` of its
// range.
struct ModeLabel {
  int part = -1;
  int dir = 0;  // +1 opening / -1 closing; 0 for "nothing"

  bool operator==(const ModeLabel& o) const {
    return part == o.part && dir == o.dir;
  }
  bool operator<(const ModeLabel& o) const {
    return part != o.part ? part < o.part : dir < o.dir;
  }
};

ModeLabel executed_mode(const ObjectSpec& spec, const WorldState& init,
                        const WorldState& final_state, float frac = 0.05f);
std::string mode_label_str(const ModeLabel& m);

// Rollout under a cluster index; lets tests substitute scripted policies for
// the trained models.
using RolloutFn =
    std::function<Trajectory(const CollectEnv& env, int k, std::uint64_t seed)>;
RolloutFn model_rollout_fn(const ModeSelector& ms, const ActionPredictor& ap);

// ---------------------------------------------------------------------------
// SSR

struct SsrEntry {
  std::string object_id;
  int successes = 0, samples = 0;
  double ssr = 0;  // successes / samples
};

struct SsrReport {
  std::string split = "seen";  // seen | unseen-instance | unseen-category
  std::vector<SsrEntry> per_object;
  int successes = 0, samples = 0;
  double ssr = 0;  // sample-weighted mean of per-object entries
};

// n_per_object rollouts per environment, each with a uniformly drawn cluster
// k in [0, K). Per-rollout seeds are derived from (seed, object index,
// rollout index), so results are independent of execution order.
SsrReport eval_ssr(const std::vector<const CollectEnv*>& envs,
                   const RolloutFn& roll, int K, int n_per_object,
                   std::uint64_t seed, const std::string& split = "seen");

// ---------------------------------------------------------------------------
// Per-cluster mode SSR

struct ClusterModeStats {
  int k = 0;
  int samples = 0;
  std::map<ModeLabel, int> histogram;  // counts sum to samples
  ModeLabel dominant;                  // most frequent label (ties: smallest)
  int dominant_count = 0;
  int dominant_successes = 0;
  double dominant_ssr = 0;  // successes executing the dominant mode / samples
};

struct ModeSsrReport {
  std::string object_id;
  int n_per_cluster = 0;
  std::vector<ClusterModeStats> clusters;
  int first_cluster = -1, second_cluster = -1;  // ranked by dominant_ssr
};

ModeSsrReport eval_mode_ssr(const CollectEnv& env, const RolloutFn& roll,
                            int K, int n_per_cluster, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Grounding

struct GroundingTarget {
  int part = 0;
  float d_g = 0;      // goal DoF value
  float d_eps = -1;   // tolerance; < 0 means the default 0.15 x joint range
};

float resolve_d_eps(const ObjectSpec& spec, const GroundingTarget& t);
// Sparse rule: r = 1 iff |d_part - d_g| < d_eps on the final state.
float sparse_reward(const ObjectSpec& spec, const GroundingTarget& t,
                    const WorldState& final_state);

struct GroundingRun {
  int K = 0;
  GroundingTarget target;
  std::vector<int> pulls;           // per arm
  std::vector<int> reward_sums;     // per arm
  std::vector<int> arm_history;     // arm chosen at each iteration
  std::vector<float> reward_curve;  // reward of each iteration's single pull
  int best_arm = -1;                // most-pulled arm (ties: smallest index)
  bool unreachable = false;
};

// Binary reward of pulling an arm once under a derived seed.
using ArmRewardFn = std::function<float(int arm, std::uint64_t seed)>;

// UCB1: each arm pulled once, then argmax of mean + sqrt(ln t / 2n)
// (Hoeffding confidence radius), one pull per iteration.
GroundingRun ucb1_bandit(int K, const ArmRewardFn& reward, int iterations,
                         std::uint64_t seed);

// Arms are clusters; a pull is a rollout scored by the sparse rule. A target
// outside the joint range (beyond tolerance) is unreachable: returns an
// all-zero curve with the flag set and a warning on stderr, no rollouts.
GroundingRun ground_bandit(const CollectEnv& env, const RolloutFn& roll, int K,
                           const GroundingTarget& target, int iterations,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// CEM baseline over continuous embeddings

using EpsRewardFn =
    std::function<double(const std::vector<float>& eps, std::uint64_t seed)>;

struct CemRun {
  std::vector<float> mean, stddev;          // final Gaussian
  std::vector<float> reward_curve;          // population mean per iteration
  std::vector<std::vector<float>> mean_history;  // mean after each iteration
};

// Per iteration: sample pop embeddings from N(mean, diag stddev^2), score,
// refit to the `elite` best (stable ties). Variances below ridge^2 are
// re-inflated to ridge^2. Throws ConfigError when elite is not in [1, pop].
CemRun ground_cem(const EpsRewardFn& reward, int dim, int pop, int elite,
                  int iterations, std::uint64_t seed, float init_std = 1.0f,
                  float ridge = 1e-2f);

// Rollout-based reward for CEM: the action predictor conditioned directly on
// the candidate embedding, scored by the sparse rule.
EpsRewardFn model_eps_reward(const CollectEnv& env, const ActionPredictor& ap,
                             const GroundingTarget& target);

// ---------------------------------------------------------------------------
// Reports

void save_ssr_csv(const SsrReport& r, const std::string& path);
void save_mode_ssr_csv(const ModeSsrReport& r, const std::string& path);
// Columns: iteration, reward, mean_reward (running mean).
void save_reward_curve_csv(const GroundingRun& r, const std::string& path);
void save_cem_curve_csv(const CemRun& r, const std::string& path);
std::string ssr_json(const SsrReport& r);
std::string mode_ssr_json(const ModeSsrReport& r);
std::string grounding_json(const GroundingRun& r);
// One JSON object per line: object, cluster, valid, success, dof deltas.
void append_rollout_jsonl(std::ostream& out, const ObjectSpec& spec,
                          const Trajectory& t, int k);

}  // namespace aim
