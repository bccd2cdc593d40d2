#include "aim/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "aim/checkpoint.hpp"
#include "aim/error.hpp"
#include "aim/rng.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;

namespace aim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// KvConfig

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Strips a trailing # comment, respecting double quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string raw, section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty section name");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
      val = val.substr(1, val.size() - 2);
    std::string full = section.empty() ? key : section + "." + key;
    cfg.kv_[full] = val;
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool KvConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KvConfig::get_str(const std::string& key,
                              const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not an integer: '" +
                      it->second + "'");
  }
}

double KvConfig::get_double(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: '" + it->second +
                      "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw ConfigError("config key " + key + ": expected true or false");
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get_str(key, ""));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

std::uint64_t KvConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [k, v] : kv_) {  // std::map: sorted, stable
    std::string line = k + "=" + v + "\n";
    h = fnv1a64(line.data(), line.size(), h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Typed config

PipelineConfig pipeline_config_from(const KvConfig& kv) {
  static const std::set<std::string> known = {
      "pipeline.seed", "pipeline.out", "pipeline.dataset_dir",
      "pipeline.objects", "pipeline.threads",
      "collect.quota", "collect.n_random", "collect.n_grasp",
      "collect.gmm_k", "collect.gmm_l", "collect.per_cluster_n",
      "collect.max_rounds",
      "modesel.K", "modesel.d_z", "modesel.d_obs", "modesel.y_dim",
      "modesel.x_dim", "modesel.d_model", "modesel.heads",
      "modesel.attn_layers", "modesel.hidden", "modesel.tau_start",
      "modesel.tau_end", "modesel.kl_beta", "modesel.epochs", "modesel.lr",
      "modesel.batch",
      "actpred.H", "actpred.W", "actpred.patch", "actpred.d_model",
      "actpred.heads", "actpred.layers", "actpred.rot_bins", "actpred.d_z",
      "actpred.sigma_px", "actpred.grid_n", "actpred.epochs", "actpred.lr",
      "actpred.batch",
      "joint.epochs", "joint.lr", "joint.elbo_lr",
      "eval.n_per_object", "eval.n_per_cluster", "eval.ground_iterations",
      "eval.target_part", "eval.target_dg", "eval.target_deps",
  };
  for (const auto& [k, v] : kv.entries())
    if (!known.count(k)) throw ConfigError("unknown config key: " + k);

  PipelineConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("pipeline.seed", 1));
  c.out_dir = kv.get_str("pipeline.out", "out");
  c.dataset_dir = kv.get_str("pipeline.dataset_dir", "");
  c.objects = kv.get_list("pipeline.objects");
  c.threads = static_cast<int>(kv.get_int("pipeline.threads", 1));

  c.collect.quota = static_cast<int>(kv.get_int("collect.quota", 150));
  c.collect.n_random = static_cast<int>(kv.get_int("collect.n_random", 100));
  c.collect.n_grasp = static_cast<int>(kv.get_int("collect.n_grasp", 100));
  c.collect.gmm_k = static_cast<int>(kv.get_int("collect.gmm_k", 8));
  c.collect.gmm_l = static_cast<int>(kv.get_int("collect.gmm_l", 3));
  c.collect.per_cluster_n =
      static_cast<int>(kv.get_int("collect.per_cluster_n", 8));
  c.collect.max_rounds = static_cast<int>(kv.get_int("collect.max_rounds", 10));

  c.ms.K = static_cast<int>(kv.get_int("modesel.K", 8));
  c.ms.d_z = static_cast<int>(kv.get_int("modesel.d_z", 32));
  c.ms.d_obs = static_cast<int>(kv.get_int("modesel.d_obs", 32));
  c.ms.y_dim = static_cast<int>(kv.get_int("modesel.y_dim", 8));
  c.ms.x_dim = static_cast<int>(kv.get_int("modesel.x_dim", 16));
  c.ms.d_model = static_cast<int>(kv.get_int("modesel.d_model", 32));
  c.ms.heads = static_cast<int>(kv.get_int("modesel.heads", 4));
  c.ms.attn_layers = static_cast<int>(kv.get_int("modesel.attn_layers", 2));
  c.ms.hidden = static_cast<int>(kv.get_int("modesel.hidden", 64));
  c.ms.tau_start =
      static_cast<float>(kv.get_double("modesel.tau_start", 1.0));
  c.ms.tau_end = static_cast<float>(kv.get_double("modesel.tau_end", 0.3));
  c.ms.kl_beta = static_cast<float>(kv.get_double("modesel.kl_beta", 1.0));
  c.ms_epochs = static_cast<int>(kv.get_int("modesel.epochs", 200));
  c.ms_lr = kv.get_double("modesel.lr", 1e-3);
  c.ms_batch = static_cast<int>(kv.get_int("modesel.batch", 16));

  c.ap.H = static_cast<int>(kv.get_int("actpred.H", 32));
  c.ap.W = static_cast<int>(kv.get_int("actpred.W", 32));
  c.ap.patch = static_cast<int>(kv.get_int("actpred.patch", 4));
  c.ap.d_model = static_cast<int>(kv.get_int("actpred.d_model", 64));
  c.ap.heads = static_cast<int>(kv.get_int("actpred.heads", 4));
  c.ap.layers = static_cast<int>(kv.get_int("actpred.layers", 4));
  c.ap.rot_bins = static_cast<int>(kv.get_int("actpred.rot_bins", 72));
  c.ap.d_z = static_cast<int>(kv.get_int("actpred.d_z", 32));
  c.ap.sigma_px = static_cast<float>(kv.get_double("actpred.sigma_px", 1.5));
  c.ap.grid_n = static_cast<int>(kv.get_int("actpred.grid_n", 33));
  c.ap_epochs = static_cast<int>(kv.get_int("actpred.epochs", 200));
  c.ap_lr = kv.get_double("actpred.lr", 3e-3);
  c.ap_batch = static_cast<int>(kv.get_int("actpred.batch", 8));

  c.joint_epochs = static_cast<int>(kv.get_int("joint.epochs", 20));
  c.joint_lr = kv.get_double("joint.lr", 1e-3);
  c.joint_elbo_lr = kv.get_double("joint.elbo_lr", -1.0);

  c.eval_n_per_object =
      static_cast<int>(kv.get_int("eval.n_per_object", 40));
  c.eval_n_per_cluster =
      static_cast<int>(kv.get_int("eval.n_per_cluster", 10));
  c.ground_iterations =
      static_cast<int>(kv.get_int("eval.ground_iterations", 50));
  c.target.part = static_cast<int>(kv.get_int("eval.target_part", 0));
  c.target.d_g = static_cast<float>(kv.get_double("eval.target_dg", -1e9));
  c.target.d_eps =
      static_cast<float>(kv.get_double("eval.target_deps", -1.0));

  // -- invariants
  if (c.objects.empty()) throw ConfigError("pipeline.objects is empty");
  for (const std::string& name : c.objects) fixture(name);  // throws if unknown
  if (c.ms.K < 2) throw ConfigError("modesel.K must be >= 2");
  if (c.collect.quota <= 0 || c.collect.n_random <= 0 || c.collect.n_grasp <= 0)
    throw ConfigError("collect quotas must be positive");
  if (c.ms_epochs < 0 || c.ap_epochs < 0 || c.joint_epochs < 0)
    throw ConfigError("epoch counts must be non-negative");
  if (c.ms_lr <= 0 || c.ap_lr <= 0 || c.joint_lr <= 0)
    throw ConfigError("learning rates must be positive");
  if (c.threads < 1) throw ConfigError("pipeline.threads must be >= 1");
  if (c.eval_n_per_object <= 0 || c.eval_n_per_cluster <= 0 ||
      c.ground_iterations <= 0)
    throw ConfigError("eval sample counts must be positive");
  // one featurizer feeds both the task embedding and the per-view tokens,
  // and the predictor consumes the selector's embedding
  if (c.ms.d_obs != c.ms.d_z || c.ap.d_z != c.ms.d_z)
    throw ConfigError(
        "modesel.d_z, modesel.d_obs and actpred.d_z must all match");

  c.config_hash = kv.hash();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  return pipeline_config_from(KvConfig::parse_file(path));
}

// ---------------------------------------------------------------------------
// Checksums and manifests

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

void save_stage_manifest(const StageManifest& m, const std::string& path) {
  json j;
  j["stage"] = m.stage;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["outputs"] = json::array();
  for (const ManifestEntry& e : m.outputs)
    j["outputs"].push_back(
        {{"path", e.path}, {"bytes", e.bytes}, {"checksum", e.checksum}});
  std::ofstream out(path);
  if (!out) throw StateError("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

StageManifest load_stage_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StateError("cannot read manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw StateError("malformed manifest " + path + ": " + e.what());
  }
  StageManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const json& o : j.at("outputs"))
    m.outputs.push_back({o.at("path").get<std::string>(),
                         o.at("bytes").get<std::uint64_t>(),
                         o.at("checksum").get<std::string>()});
  return m;
}

// ---------------------------------------------------------------------------
// StageLock

StageLock::StageLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  std::FILE* f = std::fopen(path_.c_str(), "wx");  // fails if it exists
  if (!f)
    throw StateError("output directory is locked by another run: " + path_);
  std::fclose(f);
}

StageLock::~StageLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

const std::vector<std::string> kStages = {
    "gen-objects", "collect",    "train-modesel", "train-actpred",
    "train-joint", "eval-ssr",   "eval-modes",    "ground",
    "render-views", "verify"};

const std::map<std::string, std::vector<std::string>> kPrereqs = {
    {"gen-objects", {}},
    {"collect", {"gen-objects"}},
    {"train-modesel", {"collect"}},
    {"train-actpred", {"collect"}},
    {"train-joint", {"train-modesel", "train-actpred"}},
    {"eval-ssr", {"train-joint"}},
    {"eval-modes", {"train-joint"}},
    {"ground", {"train-joint"}},
    {"render-views", {"gen-objects"}},
    {"verify", {}},
};

std::vector<ElboSample> to_elbo_samples(const Featurizer& f,
                                        const std::vector<Trajectory>& recs) {
  std::vector<ElboSample> out;
  out.reserve(recs.size());
  for (const Trajectory& t : recs)
    out.push_back({ModeSelector::obs_tokens(f, t.o_init), t.z.z});
  return out;
}

}  // namespace

const std::vector<std::string>& Pipeline::stage_names() { return kStages; }

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.dataset_dir.empty())
    cfg_.dataset_dir = (fs::path(cfg_.out_dir) / "data").string();
}

std::string Pipeline::out(const std::string& rel) const {
  return (fs::path(cfg_.out_dir) / rel).string();
}

std::string Pipeline::dataset_dir(const std::string& object) const {
  return (fs::path(cfg_.dataset_dir) / object).string();
}

const Featurizer& Pipeline::featurizer() {
  if (!feat_)
    feat_ = std::make_unique<Featurizer>(split_seed(cfg_.seed, 7), cfg_.ms.d_z);
  return *feat_;
}

const CollectEnv& Pipeline::env_for(const std::string& object) {
  auto it = envs_.find(object);
  if (it != envs_.end()) return it->second;
  std::size_t idx =
      std::find(cfg_.objects.begin(), cfg_.objects.end(), object) -
      cfg_.objects.begin();
  std::string spec_path = out("objects/" + object + ".json");
  ObjectSpec spec = fs::exists(spec_path) ? load_object_spec(spec_path)
                                          : fixture(object);
  CollectEnv env =
      make_env(spec, featurizer(), split_seed(cfg_.seed, 100 + idx));
  return envs_.emplace(object, std::move(env)).first->second;
}

StageManifest Pipeline::make_manifest(
    const std::string& stage, std::uint64_t seed,
    const std::vector<std::string>& rel_paths) const {
  StageManifest m;
  m.stage = stage;
  m.config_hash = hex64(cfg_.config_hash);
  m.seed = seed;
  for (const std::string& rel : rel_paths) {
    std::string full = out(rel);
    if (!fs::exists(full))
      throw StateError("stage " + stage + " did not produce " + full);
    m.outputs.push_back({rel, static_cast<std::uint64_t>(fs::file_size(full)),
                         hex64(file_checksum(full))});
  }
  return m;
}

bool Pipeline::stage_up_to_date(const std::string& stage) const {
  std::string mpath = out("manifests/" + stage + ".json");
  if (!fs::exists(mpath)) return false;
  StageManifest m;
  try {
    m = load_stage_manifest(mpath);
  } catch (const StateError&) {
    return false;
  }
  if (m.config_hash != hex64(cfg_.config_hash)) return false;
  for (const ManifestEntry& e : m.outputs) {
    std::string full = out(e.path);
    if (!fs::exists(full)) return false;
    if (static_cast<std::uint64_t>(fs::file_size(full)) != e.bytes)
      return false;
    if (hex64(file_checksum(full)) != e.checksum) return false;
  }
  return true;
}

void Pipeline::require_stage(const std::string& dependent,
                             const std::string& prerequisite) const {
  std::string mpath = out("manifests/" + prerequisite + ".json");
  if (!fs::exists(mpath))
    throw PrerequisiteError("stage '" + dependent + "' requires stage '" +
                            prerequisite + "' to have completed first");
  StageManifest m = load_stage_manifest(mpath);
  for (const ManifestEntry& e : m.outputs)
    if (!fs::exists(out(e.path)))
      throw PrerequisiteError("stage '" + dependent + "': output " + e.path +
                              " of prerequisite stage '" + prerequisite +
                              "' is missing");
}

bool Pipeline::run_stage(const std::string& name, bool force) {
  if (std::find(kStages.begin(), kStages.end(), name) == kStages.end())
    throw ConfigError("unknown stage: " + name);
  fs::create_directories(cfg_.out_dir);
  StageLock lock(cfg_.out_dir);

  if (name == "verify") {
    std::vector<std::string> fails = verify();
    if (!fails.empty()) {
      std::string msg = "verification failed:";
      for (const std::string& f : fails) msg += "\n  " + f;
      throw StateError(msg);
    }
    return true;
  }

  for (const std::string& pre : kPrereqs.at(name)) require_stage(name, pre);
  if (!force && stage_up_to_date(name)) return false;

  for (const char* d : {"objects", "checkpoints", "curves", "reports", "logs",
                        "renders", "manifests"})
    fs::create_directories(out(d));
  fs::create_directories(cfg_.dataset_dir);

  std::vector<std::string> outputs;
  if (name == "gen-objects") run_gen_objects(outputs);
  else if (name == "collect") run_collect(outputs);
  else if (name == "train-modesel") run_train_modesel(outputs);
  else if (name == "train-actpred") run_train_actpred(outputs);
  else if (name == "train-joint") run_train_joint(outputs);
  else if (name == "eval-ssr") run_eval_ssr(outputs);
  else if (name == "eval-modes") run_eval_modes(outputs);
  else if (name == "ground") run_ground(outputs);
  else if (name == "render-views") run_render_views(outputs);

  save_stage_manifest(make_manifest(name, cfg_.seed, outputs),
                      out("manifests/" + name + ".json"));
  return true;
}

void Pipeline::run_gen_objects(std::vector<std::string>& outputs) {
  for (const std::string& name : cfg_.objects) {
    std::string rel = "objects/" + name + ".json";
    save_object_spec(fixture(name), out(rel));
    outputs.push_back(rel);
  }
}

void Pipeline::run_collect(std::vector<std::string>& outputs) {
  for (std::size_t i = 0; i < cfg_.objects.size(); ++i) {
    const std::string& name = cfg_.objects[i];
    Dataset ds = build_dataset(env_for(name), cfg_.collect,
                               split_seed(cfg_.seed, 200 + i));
    std::string dir = dataset_dir(name);
    fs::create_directories(dir);
    save_dataset(ds, dir);
    // record whatever the dataset writer produced, sorted for stable order
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const std::string& f : files)
      outputs.push_back(
          fs::relative(f, cfg_.out_dir).string());
  }
}

void Pipeline::run_train_modesel(std::vector<std::string>& outputs) {
  std::vector<ElboSample> samples;
  for (const std::string& name : cfg_.objects) {
    Dataset ds = load_dataset(dataset_dir(name));
    std::vector<ElboSample> s = to_elbo_samples(featurizer(), ds.records);
    samples.insert(samples.end(), s.begin(), s.end());
  }
  ModeSelector ms(cfg_.ms, split_seed(cfg_.seed, 300));
  std::vector<TrainCurvePoint> curve =
      train_mode_selector(ms, samples, cfg_.ms_epochs, cfg_.ms_lr,
                          split_seed(cfg_.seed, 301), cfg_.ms_batch);
  save_mode_selector(ms, out("checkpoints/modesel.aimc"));
  save_loss_curve_csv(curve, out("curves/modesel.csv"));
  outputs = {"checkpoints/modesel.aimc", "curves/modesel.csv"};
}

namespace {
Dataset merge_datasets(std::vector<Dataset> parts) {
  Dataset all;
  all.object_id = "all";
  for (Dataset& d : parts) {
    if (all.records.empty()) {
      all.master_seed = d.master_seed;
      all.featurizer_seed = d.featurizer_seed;
    }
    for (Trajectory& t : d.records) all.records.push_back(std::move(t));
  }
  return all;
}
}  // namespace

void Pipeline::run_train_actpred(std::vector<std::string>& outputs) {
  std::vector<Dataset> parts;
  for (const std::string& name : cfg_.objects)
    parts.push_back(load_dataset(dataset_dir(name)));
  Dataset all = merge_datasets(std::move(parts));
  ActionPredictor ap(cfg_.ap, split_seed(cfg_.seed, 400));
  std::vector<BcCurvePoint> curve =
      train_bc(ap, all, nullptr, nullptr, cfg_.ap_epochs, cfg_.ap_lr,
               split_seed(cfg_.seed, 401), /*joint=*/false, cfg_.ap_batch);
  save_action_predictor(ap, out("checkpoints/actpred.aimc"));
  save_bc_curve_csv(curve, out("curves/actpred.csv"));
  outputs = {"checkpoints/actpred.aimc", "curves/actpred.csv"};
}

void Pipeline::run_train_joint(std::vector<std::string>& outputs) {
  std::vector<Dataset> parts;
  for (const std::string& name : cfg_.objects)
    parts.push_back(load_dataset(dataset_dir(name)));
  Dataset all = merge_datasets(std::move(parts));
  ModeSelector ms = load_mode_selector(out("checkpoints/modesel.aimc"));
  ActionPredictor ap = load_action_predictor(out("checkpoints/actpred.aimc"));
  std::vector<BcCurvePoint> curve = train_bc(
      ap, all, &ms, &featurizer(), cfg_.joint_epochs, cfg_.joint_lr,
      split_seed(cfg_.seed, 500), /*joint=*/true, cfg_.ap_batch,
      cfg_.joint_elbo_lr);
  save_action_predictor(ap, out("checkpoints/actpred_joint.aimc"));
  save_mode_selector(ms, out("checkpoints/modesel_joint.aimc"));
  save_bc_curve_csv(curve, out("curves/joint.csv"));
  outputs = {"checkpoints/actpred_joint.aimc", "checkpoints/modesel_joint.aimc",
             "curves/joint.csv"};
}

void Pipeline::run_eval_ssr(std::vector<std::string>& outputs) {
  ModeSelector ms = load_mode_selector(out("checkpoints/modesel_joint.aimc"));
  ActionPredictor ap =
      load_action_predictor(out("checkpoints/actpred_joint.aimc"));
  std::vector<const CollectEnv*> envs;
  for (const std::string& name : cfg_.objects) envs.push_back(&env_for(name));

  std::ofstream log(out("logs/rollouts_ssr.jsonl"));
  if (!log) throw StateError("cannot write rollout log");
  RolloutFn base = model_rollout_fn(ms, ap);
  RolloutFn logged = [&](const CollectEnv& env, int k, std::uint64_t seed) {
    Trajectory t = base(env, k, seed);
    append_rollout_jsonl(log, env.spec, t, k);
    return t;
  };
  SsrReport rep = eval_ssr(envs, logged, cfg_.ms.K, cfg_.eval_n_per_object,
                           split_seed(cfg_.seed, 600));
  log.close();
  save_ssr_csv(rep, out("reports/ssr.csv"));
  std::ofstream js(out("reports/ssr.json"));
  js << ssr_json(rep) << "\n";
  js.close();
  outputs = {"reports/ssr.csv", "reports/ssr.json", "logs/rollouts_ssr.jsonl"};
}

void Pipeline::run_eval_modes(std::vector<std::string>& outputs) {
  ModeSelector ms = load_mode_selector(out("checkpoints/modesel_joint.aimc"));
  ActionPredictor ap =
      load_action_predictor(out("checkpoints/actpred_joint.aimc"));
  ModeSsrReport rep =
      eval_mode_ssr(env_for(cfg_.objects[0]), model_rollout_fn(ms, ap),
                    cfg_.ms.K, cfg_.eval_n_per_cluster,
                    split_seed(cfg_.seed, 700));
  save_mode_ssr_csv(rep, out("reports/mode_ssr.csv"));
  std::ofstream js(out("reports/mode_ssr.json"));
  js << mode_ssr_json(rep) << "\n";
  js.close();
  outputs = {"reports/mode_ssr.csv", "reports/mode_ssr.json"};
}

void Pipeline::run_ground(std::vector<std::string>& outputs) {
  ModeSelector ms = load_mode_selector(out("checkpoints/modesel_joint.aimc"));
  ActionPredictor ap =
      load_action_predictor(out("checkpoints/actpred_joint.aimc"));
  const CollectEnv& env = env_for(cfg_.objects[0]);
  GroundingTarget target = cfg_.target;
  if (target.d_g < -1e8f)  // unset: ground the fully-open pose of part 0
    target.d_g = env.spec.parts[target.part].d_max;
  GroundingRun run =
      ground_bandit(env, model_rollout_fn(ms, ap), cfg_.ms.K, target,
                    cfg_.ground_iterations, split_seed(cfg_.seed, 800));
  std::ofstream js(out("reports/grounding.json"));
  js << grounding_json(run) << "\n";
  js.close();
  save_reward_curve_csv(run, out("reports/grounding_curve.csv"));
  outputs = {"reports/grounding.json", "reports/grounding_curve.csv"};
}

void Pipeline::run_render_views(std::vector<std::string>& outputs) {
  for (std::size_t i = 0; i < cfg_.objects.size(); ++i) {
    const CollectEnv& env = env_for(cfg_.objects[i]);
    ViewSet vs = env.observe(env.start, /*occlude_robot=*/true,
                             split_seed(cfg_.seed, 900 + i));
    std::string rel = "renders/" + cfg_.objects[i] + ".aimt";
    save_tensor(out(rel), viewset_tensor(vs));
    outputs.push_back(rel);
  }
}

std::vector<std::string> Pipeline::verify() const {
  std::vector<std::string> fails;
  for (const std::string& stage : kStages) {
    if (stage == "verify") continue;
    std::string mpath = out("manifests/" + stage + ".json");
    if (!fs::exists(mpath)) continue;  // stage never ran: nothing to check
    StageManifest m;
    try {
      m = load_stage_manifest(mpath);
    } catch (const std::exception& e) {
      fails.push_back(std::string("manifest unreadable: ") + e.what());
      continue;
    }
    for (const ManifestEntry& e : m.outputs) {
      std::string full = out(e.path);
      if (!fs::exists(full)) {
        fails.push_back(stage + ": missing output " + e.path);
        continue;
      }
      if (static_cast<std::uint64_t>(fs::file_size(full)) != e.bytes) {
        fails.push_back(stage + ": size mismatch for " + e.path);
        continue;
      }
      if (hex64(file_checksum(full)) != e.checksum) {
        fails.push_back(stage + ": checksum mismatch for " + e.path);
        continue;
      }
      // structural validation of loadable artifact types
      try {
        if (e.path.size() > 5 &&
            e.path.compare(e.path.size() - 5, 5, ".aimc") == 0)
          load_checkpoint(full);
        else if (e.path.size() > 5 &&
                 e.path.compare(e.path.size() - 5, 5, ".aimt") == 0)
          load_tensor(full);
      } catch (const std::exception& ex) {
        fails.push_back(stage + ": corrupt artifact " + e.path + ": " +
                        ex.what());
      }
    }
  }
  return fails;
}

}  // namespace aim
