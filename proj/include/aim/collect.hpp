#pragma once

// Self-supervised data collection: random play, heuristic grasp sampling,
// GMM-adaptive resampling, success filtering, and dataset persistence.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aim/embed.hpp"
#include "aim/gmm.hpp"
#include "aim/render.hpp"
#include "aim/sim.hpp"

namespace aim {

enum class Source { Random = 0, Grasp = 1, Gmm = 2 };

struct Trajectory {
  std::string object_id;
  std::uint64_t seed = 0;
  std::array<KeyPose, 4> keyposes{};
  std::array<ViewSet, 4> obs;  // robot visible, before each phase
  ViewSet o_init, o_final;     // robot occluded
  TaskEmbedding z;
  bool valid = true;
  bool success = false;
  int cluster_label = -1;
  Source source = Source::Random;
  WorldState state_init, state_final;  // ground truth kept for evaluation
};

// A scene fixed for collection: object, start state, shared normalization
// frame, featurizer and calibrated success threshold.
struct CollectEnv {
  ObjectSpec spec;
  WorldState start;
  Vec3 center;
  float scale = 1.0f;
  SimConfig sim;
  int H = 32, W = 32;
  const Featurizer* featurizer = nullptr;
  float z_bar = 0.0f;

  ViewSet observe(const WorldState& s, bool occlude_robot,
                  std::uint64_t seed) const;
};

// Sim defaults for collection: a denser point camera so occupancy noise in
// the embeddings stays well below the motion signal.
SimConfig collect_sim_config();

// Builds the env for an object: half-open start, shared frame sized to the
// full articulation envelope, threshold calibrated on 60 null re-renders.
CollectEnv make_env(const ObjectSpec& spec, const Featurizer& featurizer,
                    std::uint64_t seed,
                    const SimConfig& sim = collect_sim_config());

// Runs the 4-phase primitive and fills observations, embedding, success.
Trajectory execute_trajectory(const CollectEnv& env,
                              const std::array<KeyPose, 4>& keyposes,
                              std::uint64_t seed);

std::vector<Trajectory> random_sampling(const CollectEnv& env, int n,
                                        std::uint64_t seed);
std::vector<Trajectory> heuristic_grasp_sampling(const CollectEnv& env, int n,
                                                 std::uint64_t seed,
                                                 float sigma = 0.02f);

// Fits a GMM(K) on success embeddings, labels them, fits a per-cluster
// action GMM(L) over flattened keyposes and draws per_cluster_n new action
// sequences per cluster. Clusters with fewer than L members fall back to
// noisy resampling of their members.
std::vector<Trajectory> gmm_adaptive_round(
    const std::vector<Trajectory>& successes, const CollectEnv& env, int K,
    int L, int per_cluster_n, std::uint64_t seed,
    GmmModel* embedding_gmm = nullptr);

// 9-float action encoding for the per-cluster GMM: p1, p2, R0 axis-angle.
std::array<float, 9> flatten_action(const std::array<KeyPose, 4>& keyposes);
std::array<KeyPose, 4> unflatten_action(const std::array<float, 9>& a,
                                        const CollectEnv& env);

struct CollectConfig {
  int quota = 150;            // successful trajectories per object
  int n_random = 100;
  int n_grasp = 100;
  int gmm_k = 8;
  int gmm_l = 3;
  int per_cluster_n = 8;
  int max_rounds = 10;
};

struct Dataset {
  std::string object_id;
  std::uint64_t master_seed = 0;
  std::uint64_t featurizer_seed = 0;
  float z_bar = 0.0f;
  int count_random = 0, count_grasp = 0, count_gmm = 0;
  double filter_agreement = 1.0;  // success filter vs dof ground truth
  bool quota_met = true;
  std::vector<Trajectory> records;  // successful + valid only
};

// Algorithm: random + grasp rounds, then adaptive rounds until the quota of
// filtered successes is met (or max_rounds, flagged in the dataset).
Dataset build_dataset(const CollectEnv& env, const CollectConfig& cfg,
                      std::uint64_t master_seed);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace aim
