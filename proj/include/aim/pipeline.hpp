#pragma once

// Pipeline orchestration: a TOML-subset configuration file, a fixed artifact
// layout under one output directory, per-stage manifests carrying config
// hash + seed + output checksums, idempotent stage re-runs, and a verify
// pass over everything on disk.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aim/action_predictor.hpp"
#include "aim/collect.hpp"
#include "aim/eval.hpp"
#include "aim/mode_selector.hpp"

namespace aim {

// ---------------------------------------------------------------------------
// Config file

// Grammar (UTF-8, line oriented):
//   [section]            -- section header; keys below belong to it
//   key = value          -- value: integer, float, bool (true/false), or
//                           "quoted string"; inline # comments allowed
//   # comment / blank    -- ignored
// Keys are addressed as "section.key". Unknown keys are rejected when the
// typed PipelineConfig is built, so typos fail loudly.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text);
  static KvConfig parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  std::int64_t get_int(const std::string& key, std::int64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  // Comma-separated list inside one string value.
  std::vector<std::string> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return kv_; }
  // FNV-1a over the sorted normalized entries; stable across runs.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> kv_;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string dataset_dir;  // defaults to <out_dir>/data
  std::vector<std::string> objects;  // fixture names
  int threads = 1;

  CollectConfig collect;
  ModeSelectorConfig ms;
  int ms_epochs = 200;
  double ms_lr = 1e-3;
  int ms_batch = 16;

  ActionPredictorConfig ap;
  int ap_epochs = 200;
  double ap_lr = 3e-3;
  int ap_batch = 8;

  int joint_epochs = 20;
  double joint_lr = 1e-3;
  double joint_elbo_lr = -1.0;  // < 0: use joint_lr

  int eval_n_per_object = 40;
  int eval_n_per_cluster = 10;
  int ground_iterations = 50;
  GroundingTarget target;  // d_g < -1e8 means "d_max of part 0, object 0"

  std::uint64_t config_hash = 0;  // of the KvConfig after overrides
};

// Builds and validates the typed config; throws ConfigError on unknown keys,
// missing objects, or invariant violations (K >= 2, quotas > 0, ...).
PipelineConfig pipeline_config_from(const KvConfig& kv);
PipelineConfig load_pipeline_config(const std::string& path);

// ---------------------------------------------------------------------------
// Checksums and manifests

// fnv1a64 lives in graph.hpp, file_checksum in checkpoint.hpp.
std::string hex64(std::uint64_t v);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::uint64_t bytes = 0;
  std::string checksum;  // hex64 of FNV-1a over the file bytes
};

struct StageManifest {
  std::string stage;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> outputs;
};

void save_stage_manifest(const StageManifest& m, const std::string& path);
StageManifest load_stage_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Stages

// gen-objects   object specs as JSON               objects/<name>.json
// collect       datasets per object                 data/<name>/...
// train-modesel mode-selector checkpoint + curve    checkpoints/, curves/
// train-actpred BC-pretrained action predictor      checkpoints/, curves/
// train-joint   joint fine-tune of both             checkpoints/, curves/
// eval-ssr      SSR report + rollout log            reports/, logs/
// eval-modes    per-cluster mode report             reports/
// ground        UCB1 grounding run                  reports/
// render-views  start-state view tensors            renders/<name>.aimt
// verify        re-checks every manifest; no outputs
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  static const std::vector<std::string>& stage_names();

  // Runs one stage. Returns false when the stage was already complete for
  // this config hash and all outputs verify (skipped); force re-runs anyway.
  // Throws PrerequisiteError when an input stage has not completed.
  bool run_stage(const std::string& name, bool force = false);

  // Recomputes checksums for every stage manifest present and validates the
  // loadable artifacts (datasets, checkpoints). Returns the list of
  // failures, empty when everything verifies.
  std::vector<std::string> verify() const;

  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  std::unique_ptr<Featurizer> feat_;     // shared across stages, lazy
  std::map<std::string, CollectEnv> envs_;  // cached per object, lazy

  const Featurizer& featurizer();
  const CollectEnv& env_for(const std::string& object);
  std::string out(const std::string& rel) const;
  std::string dataset_dir(const std::string& object) const;
  StageManifest make_manifest(const std::string& stage, std::uint64_t seed,
                              const std::vector<std::string>& rel_paths) const;
  bool stage_up_to_date(const std::string& stage) const;
  void require_stage(const std::string& dependent,
                     const std::string& prerequisite) const;

  void run_gen_objects(std::vector<std::string>& outputs);
  void run_collect(std::vector<std::string>& outputs);
  void run_train_modesel(std::vector<std::string>& outputs);
  void run_train_actpred(std::vector<std::string>& outputs);
  void run_train_joint(std::vector<std::string>& outputs);
  void run_eval_ssr(std::vector<std::string>& outputs);
  void run_eval_modes(std::vector<std::string>& outputs);
  void run_ground(std::vector<std::string>& outputs);
  void run_render_views(std::vector<std::string>& outputs);
};

// Exclusive advisory lock on an output directory: creates <dir>/.lock and
// removes it on destruction; a live lock makes the constructor throw
// StateError.
class StageLock {
 public:
  explicit StageLock(const std::string& dir);
  ~StageLock();
  StageLock(const StageLock&) = delete;
  StageLock& operator=(const StageLock&) = delete;

 private:
  std::string path_;
};

}  // namespace aim
