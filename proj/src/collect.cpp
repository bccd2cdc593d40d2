#include "aim/collect.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "aim/checkpoint.hpp"
#include "aim/rng.hpp"
#include "nlohmann/json.hpp"

namespace fs = std::filesystem;

namespace aim {

ViewSet CollectEnv::observe(const WorldState& s, bool occlude_robot,
                            std::uint64_t seed) const {
  ColoredPointCloud cloud = render_cloud(spec, s, occlude_robot, seed, sim);
  return project_views(apply_normalization(cloud, center, scale), H, W);
}

SimConfig collect_sim_config() {
  SimConfig cfg;
  cfg.points_per_part = 1024;  // denser camera keeps occupancy noise below
                               // the motion signal in the embeddings
  return cfg;
}

namespace {

// Max-abs coordinate (after centering) any part can reach over its full
// joint range, so the normalized cube contains every achievable state.
float articulation_extent(const ObjectSpec& spec, Vec3 center) {
  float ext = 0.0f;
  for (const PartSpec& p : spec.parts) {
    for (int step = 0; step <= 8; ++step) {
      float d = p.d_min + (p.d_max - p.d_min) * step / 8.0f;
      for (int corner = 0; corner < 8; ++corner) {
        Vec3 l{(corner & 1 ? 1.0f : -1.0f) * p.body.x,
               (corner & 2 ? 1.0f : -1.0f) * p.body.y,
               (corner & 4 ? 1.0f : -1.0f) * p.body.z};
        Vec3 w = part_to_world(p, d, l) - center;
        ext = std::max({ext, std::fabs(w.x), std::fabs(w.y), std::fabs(w.z)});
      }
      Vec3 h = handle_world(p, d) - center;
      ext = std::max({ext, std::fabs(h.x), std::fabs(h.y), std::fabs(h.z)});
    }
  }
  return ext;
}

}  // namespace

CollectEnv make_env(const ObjectSpec& spec, const Featurizer& featurizer,
                    std::uint64_t seed, const SimConfig& sim) {
  CollectEnv env;
  env.spec = spec;
  env.sim = sim;
  env.featurizer = &featurizer;
  env.start = init_state(spec, InitMode::HalfOpen, seed);
  NormalizeResult nr =
      normalize_center(render_cloud(spec, env.start, true, split_seed(seed, 500), sim));
  env.center = nr.center;
  // cover the whole articulation envelope so moved parts never clip
  env.scale = 1.1f * std::max(nr.scale, articulation_extent(spec, nr.center));

  // threshold on null re-renders: same state, resampled surface points
  std::vector<TaskEmbedding> nulls;
  for (int i = 0; i < 60; ++i) {
    ViewSet a = env.observe(env.start, true, split_seed(seed, 1000 + 2 * i));
    ViewSet b = env.observe(env.start, true, split_seed(seed, 1001 + 2 * i));
    nulls.push_back(task_embedding(featurizer, a, b));
  }
  env.z_bar = calibrate_threshold(nulls);
  return env;
}

Trajectory execute_trajectory(const CollectEnv& env,
                              const std::array<KeyPose, 4>& keyposes,
                              std::uint64_t seed) {
  Trajectory t;
  t.object_id = env.spec.name;
  t.seed = seed;
  t.keyposes = keyposes;
  t.state_init = env.start;
  t.o_init = env.observe(env.start, true, split_seed(seed, 0));

  WorldState s = env.start;
  bool ok = true;
  for (int phase = 0; phase < 4; ++phase) {
    t.obs[phase] = env.observe(s, false, split_seed(seed, 10 + phase));
    StepResult r = step_keypose(env.spec, s, keyposes[phase], phase, env.sim);
    s = r.state;
    ok = ok && r.ok;
  }
  t.state_final = s;
  t.valid = ok;
  t.o_final = env.observe(s, true, split_seed(seed, 1));
  if (t.valid) {
    t.z = task_embedding(*env.featurizer, t.o_init, t.o_final);
    t.success = success_filter(t.z, env.z_bar);
  }
  return t;
}

namespace {

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{static_cast<float>(rng.uniform(-1, 1)),
           static_cast<float>(rng.uniform(-1, 1)),
           static_cast<float>(rng.uniform(-1, 1))};
    float n = norm(v);
    if (n > 1e-3f && n <= 1.0f) return (1.0f / n) * v;
  }
}

Vec3 random_in_ball(Rng& rng, float radius) {
  for (;;) {
    Vec3 v{static_cast<float>(rng.uniform(-radius, radius)),
           static_cast<float>(rng.uniform(-radius, radius)),
           static_cast<float>(rng.uniform(-radius, radius))};
    if (norm(v) <= radius) return v;
  }
}

Quat random_rotation(Rng& rng) {
  Quat q{static_cast<float>(rng.normal()), static_cast<float>(rng.normal()),
         static_cast<float>(rng.normal()), static_cast<float>(rng.normal())};
  return q.normalized();
}

Vec3 random_surface_point(const CollectEnv& env, Rng& rng) {
  int part = static_cast<int>(rng.below(env.spec.parts.size()));
  const PartSpec& p = env.spec.parts[part];
  // random face weighted by area, then uniform on it
  double ax = p.body.y * p.body.z, ay = p.body.x * p.body.z,
         az = p.body.x * p.body.y;
  double u = rng.uniform() * (ax + ay + az);
  float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
  Vec3 l{static_cast<float>(rng.uniform(-p.body.x, p.body.x)),
         static_cast<float>(rng.uniform(-p.body.y, p.body.y)),
         static_cast<float>(rng.uniform(-p.body.z, p.body.z))};
  if (u < ax)
    l.x = sign * p.body.x;
  else if (u < ax + ay)
    l.y = sign * p.body.y;
  else
    l.z = sign * p.body.z;
  return part_to_world(p, env.start.dof[part], l);
}

}  // namespace

std::vector<Trajectory> random_sampling(const CollectEnv& env, int n,
                                        std::uint64_t seed) {
  std::vector<Trajectory> out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) {
    std::uint64_t ts = split_seed(seed, t);
    Rng rng(split_seed(ts, 99));
    Vec3 p1 = random_surface_point(env, rng) +
              Vec3{static_cast<float>(rng.uniform(-0.1, 0.1)),
                   static_cast<float>(rng.uniform(-0.1, 0.1)),
                   static_cast<float>(rng.uniform(-0.1, 0.1))};
    Vec3 p0 = p1 + 0.2f * random_unit(rng);
    Vec3 p2 = p1 + random_in_ball(rng, 0.4f);
    Trajectory traj =
        execute_trajectory(env, make_trajectory(p0, p1, p2, random_rotation(rng)), ts);
    traj.source = Source::Random;
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> heuristic_grasp_sampling(const CollectEnv& env, int n,
                                                 std::uint64_t seed,
                                                 float sigma) {
  std::vector<Trajectory> out;
  out.reserve(n);
  for (int t = 0; t < n; ++t) {
    std::uint64_t ts = split_seed(seed, t);
    Rng rng(split_seed(ts, 99));
    int part = static_cast<int>(rng.below(env.spec.parts.size()));
    const PartSpec& p = env.spec.parts[part];
    float d = env.start.dof[part];
    Vec3 h = handle_world(p, d);
    Vec3 outward = handle_outward(p, d);

    Vec3 noise{static_cast<float>(sigma * rng.normal()),
               static_cast<float>(sigma * rng.normal()),
               static_cast<float>(sigma * rng.normal())};
    Vec3 p1 = h + noise;
    Vec3 p0 = h + 0.3f * outward;
    Quat r0 = quat_from_axis_angle_vec(
                  Vec3{static_cast<float>(sigma * rng.normal()),
                       static_cast<float>(sigma * rng.normal()),
                       static_cast<float>(sigma * rng.normal())}) *
              rotation_between(Vec3{0, 0, -1}, -1.0f * outward);

    // drag far enough that a completed pull clears the success threshold
    float range = p.d_max - p.d_min;
    float mag = static_cast<float>(rng.uniform(0.35, 0.6)) * range;
    float dir = rng.uniform() < 0.5 ? 1.0f : -1.0f;
    Vec3 p2;
    if (p.joint_kind == JointKind::Prismatic) {
      p2 = p1 + (dir * mag) * p.axis;
    } else {
      Vec3 r = h - p.pivot;
      Vec3 radial = r - dot(r, p.axis) * p.axis;
      Vec3 tangent = normalized(cross(p.axis, radial));
      p2 = p1 + (dir * mag * norm(radial)) * tangent;
    }
    Trajectory traj = execute_trajectory(env, make_trajectory(p0, p1, p2, r0), ts);
    traj.source = Source::Grasp;
    out.push_back(std::move(traj));
  }
  return out;
}

std::array<float, 9> flatten_action(const std::array<KeyPose, 4>& keyposes) {
  Vec3 p1 = keyposes[1].p, p2 = keyposes[3].p;
  Vec3 aa = quat_to_axis_angle(keyposes[0].R);
  return {p1.x, p1.y, p1.z, p2.x, p2.y, p2.z, aa.x, aa.y, aa.z};
}

std::array<KeyPose, 4> unflatten_action(const std::array<float, 9>& a,
                                        const CollectEnv& env) {
  Vec3 p1{a[0], a[1], a[2]}, p2{a[3], a[4], a[5]};
  Quat r = quat_from_axis_angle_vec(Vec3{a[6], a[7], a[8]});
  // approach from the face normal of the nearest handle
  int best = 0;
  float best_d = 1e30f;
  for (std::size_t i = 0; i < env.spec.parts.size(); ++i) {
    float dd = norm(p1 - handle_world(env.spec.parts[i], env.start.dof[i]));
    if (dd < best_d) {
      best_d = dd;
      best = static_cast<int>(i);
    }
  }
  Vec3 outward = handle_outward(env.spec.parts[best], env.start.dof[best]);
  return make_trajectory(p1 + 0.3f * outward, p1, p2, r);
}

std::vector<Trajectory> gmm_adaptive_round(
    const std::vector<Trajectory>& successes, const CollectEnv& env, int K,
    int L, int per_cluster_n, std::uint64_t seed, GmmModel* embedding_gmm) {
  if (static_cast<int>(successes.size()) < K)
    throw StateError("gmm_adaptive_round: fewer successes than clusters");
  int d_z = static_cast<int>(successes[0].z.z.size());
  Tensor emb = Tensor::zeros({static_cast<int>(successes.size()), d_z});
  for (std::size_t n = 0; n < successes.size(); ++n)
    for (int i = 0; i < d_z; ++i) emb.at(static_cast<int>(n), i) = successes[n].z.z[i];

  GmmModel g = fit_em(emb, K, split_seed(seed, 0));
  if (embedding_gmm) *embedding_gmm = g;
  std::vector<std::vector<int>> members(K);
  for (std::size_t n = 0; n < successes.size(); ++n)
    members[hard_assign(g, &emb.at(static_cast<int>(n), 0))].push_back(
        static_cast<int>(n));

  std::vector<Trajectory> out;
  for (int k = 0; k < K; ++k) {
    std::uint64_t ks = split_seed(seed, 100 + k);
    Rng rng(ks);
    std::vector<std::array<float, 9>> draws;
    if (static_cast<int>(members[k].size()) < L) {
      // too few members for a mixture: resample members with noise
      for (int j = 0; j < per_cluster_n; ++j) {
        std::array<float, 9> a;
        if (members[k].empty()) {
          int src = static_cast<int>(rng.below(successes.size()));
          a = flatten_action(successes[src].keyposes);
        } else {
          int src = members[k][rng.below(members[k].size())];
          a = flatten_action(successes[src].keyposes);
        }
        for (float& v : a) v += static_cast<float>(0.02 * rng.normal());
        draws.push_back(a);
      }
    } else {
      Tensor actions = Tensor::zeros({static_cast<int>(members[k].size()), 9});
      for (std::size_t m = 0; m < members[k].size(); ++m) {
        std::array<float, 9> a = flatten_action(successes[members[k][m]].keyposes);
        for (int i = 0; i < 9; ++i) actions.at(static_cast<int>(m), i) = a[i];
      }
      GmmModel am = fit_em(actions, L, split_seed(ks, 1));
      Tensor s = gmm_sample(am, per_cluster_n, split_seed(ks, 2));
      for (int j = 0; j < per_cluster_n; ++j) {
        std::array<float, 9> a;
        for (int i = 0; i < 9; ++i) a[i] = s.at(j, i);
        draws.push_back(a);
      }
    }
    for (std::size_t j = 0; j < draws.size(); ++j) {
      Trajectory t = execute_trajectory(env, unflatten_action(draws[j], env),
                                        split_seed(ks, 1000 + j));
      if (!t.valid) continue;
      t.source = Source::Gmm;
      t.cluster_label = k;
      out.push_back(std::move(t));
    }
  }
  return out;
}

Dataset build_dataset(const CollectEnv& env, const CollectConfig& cfg,
                      std::uint64_t master_seed) {
  Dataset ds;
  ds.object_id = env.spec.name;
  ds.master_seed = master_seed;
  ds.featurizer_seed = env.featurizer->seed();
  ds.z_bar = env.z_bar;

  long agree = 0, total = 0;
  auto absorb = [&](std::vector<Trajectory>&& batch) {
    for (Trajectory& t : batch) {
      if (!t.valid) continue;
      bool truth = dof_success(env.spec, t.state_init, t.state_final,
                               env.sim.success_frac);
      agree += t.success == truth;
      ++total;
      if (t.success && static_cast<int>(ds.records.size()) < cfg.quota)
        ds.records.push_back(std::move(t));
    }
  };

  absorb(random_sampling(env, cfg.n_random, split_seed(master_seed, 1)));
  absorb(heuristic_grasp_sampling(env, cfg.n_grasp, split_seed(master_seed, 2)));

  int round = 0;
  while (static_cast<int>(ds.records.size()) < cfg.quota &&
         round < cfg.max_rounds) {
    if (static_cast<int>(ds.records.size()) < cfg.gmm_k) {
      absorb(heuristic_grasp_sampling(env, cfg.n_grasp,
                                      split_seed(master_seed, 50 + round)));
    } else {
      absorb(gmm_adaptive_round(ds.records, env, cfg.gmm_k, cfg.gmm_l,
                                cfg.per_cluster_n,
                                split_seed(master_seed, 10 + round)));
    }
    ++round;
  }
  ds.quota_met = static_cast<int>(ds.records.size()) >= cfg.quota;
  ds.filter_agreement = total ? static_cast<double>(agree) / total : 1.0;
  for (const Trajectory& t : ds.records) {
    ds.count_random += t.source == Source::Random;
    ds.count_grasp += t.source == Source::Grasp;
    ds.count_gmm += t.source == Source::Gmm;
  }
  return ds;
}

namespace {

using nlohmann::ordered_json;

ordered_json vec3_json(Vec3 v) { return ordered_json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const ordered_json& j) {
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

ordered_json keypose_json(const KeyPose& k) {
  ordered_json j;
  j["p"] = vec3_json(k.p);
  j["R"] = ordered_json::array({k.R.w, k.R.x, k.R.y, k.R.z});
  j["q"] = k.q;
  return j;
}

KeyPose keypose_from(const ordered_json& j) {
  KeyPose k;
  k.p = vec3_from(j.at("p"));
  k.R = Quat{j.at("R")[0].get<float>(), j.at("R")[1].get<float>(),
             j.at("R")[2].get<float>(), j.at("R")[3].get<float>()};
  k.q = j.at("q").get<int>();
  return k;
}

std::string record_dir(const std::string& dir, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rec_%05zu", i);
  return dir + "/" + buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["object"] = ds.object_id;
  manifest["master_seed"] = ds.master_seed;
  manifest["featurizer_seed"] = ds.featurizer_seed;
  manifest["z_bar"] = ds.z_bar;
  manifest["counts"] = {{"random", ds.count_random},
                        {"grasp", ds.count_grasp},
                        {"gmm", ds.count_gmm}};
  manifest["filter_agreement"] = ds.filter_agreement;
  manifest["quota_met"] = ds.quota_met;
  manifest["num_records"] = ds.records.size();

  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const Trajectory& t = ds.records[i];
    std::string rd = record_dir(dir, i);
    fs::create_directories(rd);
    ordered_json j;
    j["object"] = t.object_id;
    j["seed"] = t.seed;
    j["source"] = static_cast<int>(t.source);
    j["cluster"] = t.cluster_label;
    j["valid"] = t.valid;
    j["success"] = t.success;
    j["keyposes"] = ordered_json::array();
    for (const KeyPose& k : t.keyposes) j["keyposes"].push_back(keypose_json(k));
    j["z"] = t.z.z;
    j["dof_init"] = t.state_init.dof;
    j["dof_final"] = t.state_final.dof;
    std::ofstream out(rd + "/keyposes.json");
    if (!out) throw StateError("cannot write " + rd + "/keyposes.json");
    out << j.dump(2) << "\n";

    for (int phase = 0; phase < 4; ++phase)
      save_tensor(rd + "/obs_" + std::to_string(phase) + ".aimt",
                  viewset_tensor(t.obs[phase]));
    save_tensor(rd + "/o_init.aimt", viewset_tensor(t.o_init));
    save_tensor(rd + "/o_final.aimt", viewset_tensor(t.o_final));
  }
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw StateError("cannot write dataset manifest");
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw ConfigError("cannot open dataset manifest in " + dir);
  ordered_json manifest = ordered_json::parse(in);
  Dataset ds;
  ds.object_id = manifest.at("object").get<std::string>();
  ds.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  ds.featurizer_seed = manifest.at("featurizer_seed").get<std::uint64_t>();
  ds.z_bar = manifest.at("z_bar").get<float>();
  ds.count_random = manifest.at("counts").at("random").get<int>();
  ds.count_grasp = manifest.at("counts").at("grasp").get<int>();
  ds.count_gmm = manifest.at("counts").at("gmm").get<int>();
  ds.filter_agreement = manifest.at("filter_agreement").get<double>();
  ds.quota_met = manifest.at("quota_met").get<bool>();
  std::size_t n = manifest.at("num_records").get<std::size_t>();

  for (std::size_t i = 0; i < n; ++i) {
    std::string rd = record_dir(dir, i);
    std::ifstream rin(rd + "/keyposes.json");
    if (!rin) throw ConfigError("missing dataset record " + rd);
    ordered_json j = ordered_json::parse(rin);
    Trajectory t;
    t.object_id = j.at("object").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.source = static_cast<Source>(j.at("source").get<int>());
    t.cluster_label = j.at("cluster").get<int>();
    t.valid = j.at("valid").get<bool>();
    t.success = j.at("success").get<bool>();
    for (int p = 0; p < 4; ++p) t.keyposes[p] = keypose_from(j.at("keyposes")[p]);
    t.z.z = j.at("z").get<std::vector<float>>();
    t.state_init.dof = j.at("dof_init").get<std::vector<float>>();
    t.state_final.dof = j.at("dof_final").get<std::vector<float>>();
    for (int phase = 0; phase < 4; ++phase)
      t.obs[phase] = viewset_from_tensor(
          load_tensor(rd + "/obs_" + std::to_string(phase) + ".aimt"));
    t.o_init = viewset_from_tensor(load_tensor(rd + "/o_init.aimt"));
    t.o_final = viewset_from_tensor(load_tensor(rd + "/o_final.aimt"));
    ds.records.push_back(std::move(t));
  }
  return ds;
}

}  // namespace aim
