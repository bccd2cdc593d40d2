#include "aim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "aim/rng.hpp"
#include "nlohmann/json.hpp"

namespace aim {

float norm(Vec3 a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(Vec3 a) {
  float n = norm(a);
  if (n < 1e-12f) throw NumericError("normalizing near-zero vector");
  return (1.0f / n) * a;
}

Quat Quat::from_axis_angle(Vec3 axis, float angle) {
  Vec3 u = aim::normalized(axis);
  float s = std::sin(angle * 0.5f);
  return Quat{std::cos(angle * 0.5f), s * u.x, s * u.y, s * u.z};
}

float Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::normalized() const {
  float n = norm();
  if (n < 1e-12f) throw NumericError("normalizing near-zero quaternion");
  return Quat{w / n, x / n, y / n, z / n};
}

Vec3 Quat::rotate(Vec3 v) const {
  // v' = v + 2 u x (u x v + w v), u = (x,y,z)
  Vec3 u{x, y, z};
  Vec3 t = cross(u, v);
  t = t + w * v;
  t = cross(u, t);
  return v + 2.0f * t;
}

Quat operator*(Quat a, Quat b) {
  return Quat{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
              a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
              a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
              a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quat rotation_between(Vec3 a, Vec3 b) {
  Vec3 u = normalized(a), v = normalized(b);
  float c = dot(u, v);
  if (c > 1.0f - 1e-6f) return Quat::identity();
  if (c < -1.0f + 1e-6f) {
    // opposite directions: rotate pi about any perpendicular axis
    Vec3 perp = std::fabs(u.x) < 0.9f ? cross(u, Vec3{1, 0, 0})
                                      : cross(u, Vec3{0, 1, 0});
    return Quat::from_axis_angle(perp, 3.14159265358979f);
  }
  Vec3 axis = cross(u, v);
  Quat q{1.0f + c, axis.x, axis.y, axis.z};
  return q.normalized();
}

Vec3 quat_to_axis_angle(Quat q) {
  if (q.w < 0) q = Quat{-q.w, -q.x, -q.y, -q.z};
  float s = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  if (s < 1e-8f) return Vec3{0, 0, 0};
  float angle = 2.0f * std::atan2(s, q.w);
  return (angle / s) * Vec3{q.x, q.y, q.z};
}

Quat quat_from_axis_angle_vec(Vec3 aa) {
  float angle = norm(aa);
  if (angle < 1e-8f) return Quat::identity();
  return Quat::from_axis_angle((1.0f / angle) * aa, angle);
}

Vec3 part_to_world(const PartSpec& part, float d, Vec3 local) {
  if (part.joint_kind == JointKind::Prismatic)
    return part.origin + d * part.axis + local;
  Quat r = Quat::from_axis_angle(part.axis, d);
  return part.pivot + r.rotate(part.origin + local - part.pivot);
}

Vec3 world_to_part(const PartSpec& part, float d, Vec3 world) {
  if (part.joint_kind == JointKind::Prismatic)
    return world - part.origin - d * part.axis;
  Quat r = Quat::from_axis_angle(part.axis, -d);
  return r.rotate(world - part.pivot) + part.pivot - part.origin;
}

Vec3 handle_world(const PartSpec& part, float d) {
  return part_to_world(part, d, part.handle_offset);
}

Vec3 handle_outward(const PartSpec& part, float d) {
  Vec3 l = part.handle_offset;
  Vec3 c{std::clamp(l.x, -part.body.x, part.body.x),
         std::clamp(l.y, -part.body.y, part.body.y),
         std::clamp(l.z, -part.body.z, part.body.z)};
  if (norm(l - c) > 1e-6f)
    return normalized(part_to_world(part, d, l) - part_to_world(part, d, c));
  return normalized(handle_world(part, d) - part_to_world(part, d, Vec3{0, 0, 0}));
}

bool point_in_part(const PartSpec& part, float d, Vec3 world) {
  Vec3 l = world_to_part(part, d, world);
  return std::fabs(l.x) <= part.body.x && std::fabs(l.y) <= part.body.y &&
         std::fabs(l.z) <= part.body.z;
}

namespace {

bool in_workspace(const ObjectSpec& spec, Vec3 p) {
  float w = spec.workspace;
  return std::fabs(p.x) <= w && std::fabs(p.y) <= w && std::fabs(p.z) <= w;
}

// Support of the box along a direction, in the part frame.
float box_support(const PartSpec& part, Vec3 dir) {
  return std::fabs(dir.x) * part.body.x + std::fabs(dir.y) * part.body.y +
         std::fabs(dir.z) * part.body.z;
}

float clamp_dof(const PartSpec& part, float d) {
  return std::clamp(d, part.d_min, part.d_max);
}

// Tangent direction and lever arm of the handle about a revolute joint.
void revolute_tangent(const PartSpec& part, float d, Vec3& tangent, float& lever) {
  Vec3 h = handle_world(part, d);
  Vec3 r = h - part.pivot;
  Vec3 radial = r - dot(r, part.axis) * part.axis;
  lever = norm(radial);
  if (lever < 1e-6f) throw NumericError("revolute handle on the hinge axis");
  tangent = normalized(cross(part.axis, radial));
}

}  // namespace

void ObjectSpec::validate() const {
  if (parts.empty()) throw ConfigError("object spec needs at least one part");
  if (workspace <= 0) throw ConfigError("non-positive workspace");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const PartSpec& p = parts[i];
    std::string tag = "part " + std::to_string(i) + ": ";
    if (!(p.d_min < p.d_max)) throw ConfigError(tag + "requires d_min < d_max");
    if (std::fabs(norm(p.axis) - 1.0f) > 1e-6f)
      throw ConfigError(tag + "axis must be unit length");
    if (p.body.x <= 0 || p.body.y <= 0 || p.body.z <= 0)
      throw ConfigError(tag + "non-positive body half-extent");
    // box corners must stay inside the workspace over the joint range
    for (float d : {p.d_min, 0.5f * (p.d_min + p.d_max), p.d_max})
      for (int corner = 0; corner < 8; ++corner) {
        Vec3 local{(corner & 1 ? p.body.x : -p.body.x),
                   (corner & 2 ? p.body.y : -p.body.y),
                   (corner & 4 ? p.body.z : -p.body.z)};
        if (!in_workspace(*this, part_to_world(p, d, local)))
          throw ConfigError(tag + "body leaves workspace within joint range");
      }
  }
}

WorldState init_state(const ObjectSpec& spec, InitMode mode, std::uint64_t seed) {
  spec.validate();
  WorldState s;
  s.dof.resize(spec.parts.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.parts.size(); ++i) {
    const PartSpec& p = spec.parts[i];
    s.dof[i] = mode == InitMode::HalfOpen
                   ? 0.5f * (p.d_min + p.d_max)
                   : static_cast<float>(rng.uniform(p.d_min, p.d_max));
  }
  s.gripper_pose.p = {0, 0, 0.9f * spec.workspace};
  s.gripper_pose.R = Quat::identity();
  s.gripper_pose.q = 0;
  return s;
}

StepResult step_keypose(const ObjectSpec& spec, const WorldState& state,
                        const KeyPose& a, int phase, const SimConfig& cfg) {
  if (phase < 0 || phase > 3) throw StateError("keypose phase out of range");
  StepResult res{state, true};
  WorldState& s = res.state;

  if (!in_workspace(spec, a.p)) {
    res.ok = false;
    return res;
  }

  Vec3 start = s.gripper_pose.p;

  if (phase == 0 || phase == 1) {
    // free-space move; touching any part body invalidates the trajectory
    for (int k = 0; k < cfg.collision_samples && res.ok; ++k) {
      float t = cfg.collision_samples == 1
                    ? 1.0f
                    : static_cast<float>(k) / (cfg.collision_samples - 1);
      Vec3 q = start + t * (a.p - start);
      for (std::size_t i = 0; i < spec.parts.size(); ++i)
        if (point_in_part(spec.parts[i], s.dof[i], q)) res.ok = false;
    }
    s.gripper_pose = a;
    s.gripper_pose.q = 0;
    return res;
  }

  if (phase == 2) {
    s.gripper_pose = a;
    if (a.q == 1) {
      for (std::size_t i = 0; i < spec.parts.size(); ++i) {
        if (norm(a.p - handle_world(spec.parts[i], s.dof[i])) <= cfg.grasp_radius) {
          s.attached_part = static_cast<int>(i);
          break;
        }
      }
    }
    return res;
  }

  // phase 3: manipulate
  Vec3 delta = a.p - start;
  if (s.attached_part) {
    int i = *s.attached_part;
    const PartSpec& part = spec.parts[i];
    float dd;
    if (part.joint_kind == JointKind::Prismatic) {
      dd = dot(delta, part.axis);
    } else {
      Vec3 tangent;
      float lever;
      revolute_tangent(part, s.dof[i], tangent, lever);
      dd = dot(delta, tangent) / lever;
    }
    s.dof[i] = clamp_dof(part, s.dof[i] + dd);
  } else {
    // push contact: the joint only ever moves in the closing direction
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
      const PartSpec& part = spec.parts[i];
      if (part.joint_kind == JointKind::Prismatic) {
        if (dot(delta, part.axis) >= 0) continue;  // motion does not oppose opening
        float e = box_support(part, part.axis);
        for (int k = 0; k < cfg.collision_samples; ++k) {
          float t = static_cast<float>(k) / (cfg.collision_samples - 1);
          Vec3 q = start + t * delta;
          if (!point_in_part(part, s.dof[i], q)) continue;
          // retreat the front face to the contact point
          float u = dot(world_to_part(part, s.dof[i], q), part.axis);
          s.dof[i] = clamp_dof(part, s.dof[i] - (e - u));
        }
      } else {
        Vec3 tangent;
        float lever;
        revolute_tangent(part, s.dof[i], tangent, lever);
        float dd = dot(delta, tangent) / lever;
        if (dd >= 0) continue;
        bool touched = false;
        for (int k = 0; k < cfg.collision_samples && !touched; ++k) {
          float t = static_cast<float>(k) / (cfg.collision_samples - 1);
          if (point_in_part(part, s.dof[i], start + t * delta)) touched = true;
        }
        if (touched) s.dof[i] = clamp_dof(part, s.dof[i] + dd);
      }
    }
  }
  s.gripper_pose = a;
  return res;
}

std::array<KeyPose, 4> make_trajectory(Vec3 p0, Vec3 p1, Vec3 p2, Quat R) {
  return {KeyPose{p0, R, 0}, KeyPose{p1, R, 0}, KeyPose{p1, R, 1},
          KeyPose{p2, R, 1}};
}

StepResult run_trajectory(const ObjectSpec& spec, const WorldState& state,
                          const std::array<KeyPose, 4>& traj,
                          const SimConfig& cfg) {
  StepResult res{state, true};
  for (int phase = 0; phase < 4; ++phase) {
    StepResult step = step_keypose(spec, res.state, traj[phase], phase, cfg);
    res.state = step.state;
    res.ok = res.ok && step.ok;
  }
  return res;
}

namespace {

void sample_box_surface(Rng& rng, Vec3 half, int n, std::vector<Vec3>& out) {
  // pick a face pair proportional to area, then a sign and a uniform point
  double ax = half.y * half.z, ay = half.x * half.z, az = half.x * half.y;
  double total = ax + ay + az;
  for (int k = 0; k < n; ++k) {
    double u = rng.uniform() * total;
    float sign = rng.uniform() < 0.5 ? -1.0f : 1.0f;
    Vec3 p{static_cast<float>(rng.uniform(-half.x, half.x)),
           static_cast<float>(rng.uniform(-half.y, half.y)),
           static_cast<float>(rng.uniform(-half.z, half.z))};
    if (u < ax)
      p.x = sign * half.x;
    else if (u < ax + ay)
      p.y = sign * half.y;
    else
      p.z = sign * half.z;
    out.push_back(p);
  }
}

}  // namespace

ColoredPointCloud render_cloud(const ObjectSpec& spec, const WorldState& state,
                               bool occlude_robot, std::uint64_t seed,
                               const SimConfig& cfg) {
  ColoredPointCloud cloud;
  for (std::size_t i = 0; i < spec.parts.size(); ++i) {
    const PartSpec& part = spec.parts[i];
    Rng rng(split_seed(seed, i));
    std::vector<Vec3> local;
    sample_box_surface(rng, part.body, cfg.points_per_part, local);
    for (Vec3 l : local) {
      cloud.points.push_back(part_to_world(part, state.dof[i], l));
      cloud.colors.push_back(part.color);
    }
  }
  if (!occlude_robot) {
    Rng rng(split_seed(seed, 0xBEEF));
    std::vector<Vec3> local;
    sample_box_surface(rng, Vec3{0.02f, 0.02f, 0.02f}, cfg.gripper_points, local);
    for (Vec3 l : local) {
      cloud.points.push_back(state.gripper_pose.p + state.gripper_pose.R.rotate(l));
      cloud.colors.push_back(Vec3{0.7f, 0.7f, 0.7f});
    }
  }
  return cloud;
}

std::vector<bool> dof_success_per_part(const ObjectSpec& spec,
                                       const WorldState& init,
                                       const WorldState& final_state,
                                       float frac) {
  if (init.dof.size() != spec.parts.size() ||
      final_state.dof.size() != spec.parts.size())
    throw StateError("dof_success: state/spec part count mismatch");
  std::vector<bool> out(spec.parts.size());
  for (std::size_t i = 0; i < spec.parts.size(); ++i) {
    const PartSpec& p = spec.parts[i];
    float range = p.d_max - p.d_min;
    out[i] = std::fabs(final_state.dof[i] - init.dof[i]) / range > frac;
  }
  return out;
}

bool dof_success(const ObjectSpec& spec, const WorldState& init,
                 const WorldState& final_state, float frac) {
  auto per = dof_success_per_part(spec, init, final_state, frac);
  return std::any_of(per.begin(), per.end(), [](bool b) { return b; });
}

namespace {

using nlohmann::json;

Vec3 vec3_of(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected 3-vector");
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

json json_of(Vec3 v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

ObjectSpec parse_object_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("object spec parse error: ") + e.what());
  }
  ObjectSpec spec;
  try {
    spec.name = j.value("name", "");
    spec.workspace = j.value("workspace", 1.0f);
    for (const json& pj : j.at("parts")) {
      PartSpec p;
      std::string kind = pj.at("joint").get<std::string>();
      if (kind == "prismatic")
        p.joint_kind = JointKind::Prismatic;
      else if (kind == "revolute")
        p.joint_kind = JointKind::Revolute;
      else
        throw ConfigError("unknown joint kind: " + kind);
      p.axis = vec3_of(pj.at("axis"));
      if (pj.contains("pivot")) p.pivot = vec3_of(pj.at("pivot"));
      p.origin = vec3_of(pj.at("origin"));
      p.d_min = pj.at("range")[0].get<float>();
      p.d_max = pj.at("range")[1].get<float>();
      p.body = vec3_of(pj.at("body"));
      p.handle_offset = vec3_of(pj.at("handle"));
      if (pj.contains("color")) p.color = vec3_of(pj.at("color"));
      spec.parts.push_back(p);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("object spec field error: ") + e.what());
  }
  spec.validate();
  return spec;
}

ObjectSpec load_object_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open object spec: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_object_spec(text);
}

void save_object_spec(const ObjectSpec& spec, const std::string& path) {
  json j;
  j["name"] = spec.name;
  j["workspace"] = spec.workspace;
  j["parts"] = json::array();
  for (const PartSpec& p : spec.parts) {
    json pj;
    pj["joint"] = p.joint_kind == JointKind::Prismatic ? "prismatic" : "revolute";
    pj["axis"] = json_of(p.axis);
    pj["pivot"] = json_of(p.pivot);
    pj["origin"] = json_of(p.origin);
    pj["range"] = json::array({p.d_min, p.d_max});
    pj["body"] = json_of(p.body);
    pj["handle"] = json_of(p.handle_offset);
    pj["color"] = json_of(p.color);
    j["parts"].push_back(pj);
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write object spec: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace aim
