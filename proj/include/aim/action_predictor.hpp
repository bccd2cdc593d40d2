#pragma once

// Behavior-cloned keypose policy P(a | o, eps): a token transformer over
// patchified rendered views plus embedding / gripper / phase tokens, emitting
// per-view position heatmaps, discretized Euler-angle rotation logits and a
// gripper bit. Includes the BC loss, the training loop (optionally joint with
// the mode selector under a stop-gradient), and environment rollouts.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aim/collect.hpp"
#include "aim/graph.hpp"
#include "aim/mode_selector.hpp"
#include "aim/render.hpp"
#include "aim/sim.hpp"

namespace aim {

struct ActionPredictorConfig {
  int H = 32, W = 32;   // view resolution; must match the dataset renders
  int patch = 4;        // square patch edge; H and W must be divisible
  int d_model = 64;     // token width
  int heads = 4;
  int layers = 4;
  int rot_bins = 72;    // per Euler axis; bins * 5 degrees = 360
  int d_z = 32;         // task-embedding input width
  float sigma_px = 1.5f;  // Gaussian radius of target heatmaps
  int grid_n = 33;      // decode candidate grid resolution per axis
};

// Euler-angle (yaw-pitch-roll, intrinsic Z-Y-X) conversion used for the
// rotation discretization. Angles in radians: {yaw, pitch, roll}.
std::array<float, 3> quat_to_euler_zyx(Quat q);
Quat euler_zyx_to_quat(const std::array<float, 3>& ypr);
// Nearest-bin index of an angle on the 2*pi circle, and the bin's center.
int rot_bin(float angle, int bins);
float rot_bin_center(int bin, int bins);

struct ActionPrediction {
  std::array<Heatmap, kNumViews> heatmaps;       // post-softmax, sum to 1
  std::array<std::vector<float>, 3> rot_logits;  // rot_bins each
  float grip_logit = 0.0f;
  KeyPose decoded;  // world frame, unit quaternion
};

// Graph handles of one forward pass, for loss construction.
struct ApForward {
  std::array<Value, kNumViews> heat_logits;  // {1, H*W} pixel logits
  std::array<Value, 3> rot_logits;           // {1, rot_bins}
  Value grip_logit;                          // {1, 1}
};

struct BcTerms {
  double pos_ce = 0, rot_ce = 0, grip_ce = 0, total = 0;
};

class ActionPredictor {
 public:
  ActionPredictor(ActionPredictorConfig cfg, std::uint64_t seed);

  const ActionPredictorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int patches_per_view() const {
    return (cfg_.H / cfg_.patch) * (cfg_.W / cfg_.patch);
  }

  // Forward pass on a graph. gripper_state and phase select learned tokens.
  // patch_order (test hook) feeds view patches in a permuted order with
  // matched positional encodings; outputs must be invariant to it.
  ApForward forward_graph(Graph& g, const ViewSet& views,
                          const std::vector<float>& eps, int gripper_state,
                          int phase,
                          const std::vector<int>* patch_order = nullptr) const;

  // Inference: softmaxed heatmaps, argmax rotation bins, grip threshold at
  // logit 0, position decoded over the candidate grid in the view frame and
  // mapped back to world coordinates.
  ActionPrediction predict(const ViewSet& views, const std::vector<float>& eps,
                           int gripper_state, int phase) const;

  // Position CE against Gaussian-smoothed target maps (summed over views) +
  // rotation CE per axis + gripper binary CE. The target keypose is given in
  // world frame; `frame` supplies the normalization. Throws StateError when
  // the target projects outside any view.
  Value bc_loss(Graph& g, const ApForward& f, const KeyPose& target,
                const ViewSet& frame, BcTerms* terms) const;

 private:
  ActionPredictorConfig cfg_;
  mutable ParamStore params_;
};

// Gripper state entering a phase, from the trajectory q-pattern (0,0,1,1).
int gripper_state_before(const std::array<KeyPose, 4>& keyposes, int phase);

struct BcCurvePoint {
  int epoch = 0;
  BcTerms terms;
  double elbo = 0;  // joint training only
};

// Behavior cloning over all (record, phase) pairs of the dataset.
// joint=false conditions on the ground-truth task embedding z. joint=true
// draws eps from the mode selector (argmax-posterior cluster, deterministic
// decode) outside the action graph -- an exact stop-gradient -- and
// interleaves one selector ELBO step per batch; elbo_lr < 0 means "use lr",
// 0 skips the selector update (the L_ELBO = 0 ablation).
std::vector<BcCurvePoint> train_bc(ActionPredictor& ap, const Dataset& ds,
                                   ModeSelector* ms, const Featurizer* feat,
                                   int epochs, double lr, std::uint64_t seed,
                                   bool joint, int batch_size = 8,
                                   double elbo_lr = -1.0);

void save_bc_curve_csv(const std::vector<BcCurvePoint>& curve,
                       const std::string& path);

// A policy maps (observation, phase, gripper state) to the next keypose;
// the factory sees the initial occluded observation first (e.g. to infer a
// mode embedding once per rollout).
using Policy = std::function<KeyPose(const ViewSet& obs, int phase, int grip)>;
using PolicyFactory = std::function<Policy(const ViewSet& o_init)>;

// Runs the 4-phase primitive with policy-chosen keyposes; invalid steps mark
// the trajectory failed instead of throwing. Success is ground-truth
// dof_success on the final state.
Trajectory rollout_policy(const CollectEnv& env, const PolicyFactory& make,
                          std::uint64_t seed);

// Model rollout: eps = mode selector's deterministic decode of cluster k.
Trajectory rollout(const CollectEnv& env, const ModeSelector& ms,
                   const ActionPredictor& ap, int k, std::uint64_t seed);

void save_action_predictor(const ActionPredictor& ap, const std::string& path);
ActionPredictor load_action_predictor(const std::string& path);

}  // namespace aim
