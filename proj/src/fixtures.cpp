// Built-in articulated-object fixtures at toy scale, plus scripted grasp
// witnesses that move any part past the 30% success threshold in either
// direction. Geometry is chosen so the approach segments stay collision-free
// from the gripper home pose.

#include <algorithm>
#include <cmath>

#include "aim/sim.hpp"

namespace aim {

namespace {

PartSpec prismatic(Vec3 axis, Vec3 origin, float d_min, float d_max, Vec3 body,
                   Vec3 handle, Vec3 color) {
  PartSpec p;
  p.joint_kind = JointKind::Prismatic;
  p.axis = axis;
  p.origin = origin;
  p.d_min = d_min;
  p.d_max = d_max;
  p.body = body;
  p.handle_offset = handle;
  p.color = color;
  return p;
}

PartSpec revolute(Vec3 axis, Vec3 pivot, Vec3 origin, float d_min, float d_max,
                  Vec3 body, Vec3 handle, Vec3 color) {
  PartSpec p;
  p.joint_kind = JointKind::Revolute;
  p.axis = axis;
  p.pivot = pivot;
  p.origin = origin;
  p.d_min = d_min;
  p.d_max = d_max;
  p.body = body;
  p.handle_offset = handle;
  p.color = color;
  return p;
}

ObjectSpec make_drawer_table() {
  ObjectSpec s;
  s.name = "drawer_table";
  s.parts.push_back(prismatic({1, 0, 0}, {-0.35f, 0, 0}, 0.0f, 0.6f,
                              {0.25f, 0.2f, 0.1f}, {0.28f, 0, 0},
                              {0.8f, 0.2f, 0.2f}));
  return s;
}

ObjectSpec make_drawer_table_2() {
  ObjectSpec s;
  s.name = "drawer_table_2";
  s.parts.push_back(prismatic({1, 0, 0}, {-0.35f, 0, 0.25f}, 0.0f, 0.6f,
                              {0.25f, 0.2f, 0.1f}, {0.28f, 0, 0},
                              {0.8f, 0.2f, 0.2f}));
  s.parts.push_back(prismatic({1, 0, 0}, {-0.35f, 0, -0.25f}, 0.0f, 0.6f,
                              {0.25f, 0.2f, 0.1f}, {0.28f, 0, 0},
                              {0.2f, 0.2f, 0.8f}));
  return s;
}

ObjectSpec make_door() {
  ObjectSpec s;
  s.name = "door";
  s.parts.push_back(revolute({0, 0, 1}, {-0.3f, -0.3f, 0}, {-0.3f, 0, 0}, 0.0f,
                             1.2f, {0.02f, 0.3f, 0.3f}, {0.04f, 0.25f, 0},
                             {0.6f, 0.4f, 0.2f}));
  return s;
}

ObjectSpec make_cabinet() {
  ObjectSpec s;
  s.name = "cabinet";
  s.parts.push_back(revolute({0, 0, 1}, {-0.3f, -0.35f, 0}, {-0.3f, -0.2f, 0},
                             0.0f, 1.2f, {0.02f, 0.15f, 0.3f},
                             {0.04f, 0.12f, 0}, {0.6f, 0.4f, 0.2f}));
  s.parts.push_back(revolute({0, 0, -1}, {-0.3f, 0.35f, 0}, {-0.3f, 0.2f, 0},
                             0.0f, 1.2f, {0.02f, 0.15f, 0.3f},
                             {0.04f, -0.12f, 0}, {0.4f, 0.6f, 0.2f}));
  return s;
}

ObjectSpec make_faucet() {
  ObjectSpec s;
  s.name = "faucet";
  s.parts.push_back(revolute({0, 0, 1}, {0.3f, 0.3f, 0.2f}, {0.44f, 0.3f, 0.2f},
                             -0.8f, 0.8f, {0.12f, 0.03f, 0.03f},
                             {0.1f, 0, 0.05f}, {0.2f, 0.6f, 0.8f}));
  return s;
}

ObjectSpec make_switch() {
  ObjectSpec s;
  s.name = "switch";
  s.parts.push_back(prismatic({0, 0, 1}, {0.5f, -0.5f, 0.1f}, 0.0f, 0.12f,
                              {0.04f, 0.04f, 0.05f}, {0, 0, 0.06f},
                              {0.9f, 0.8f, 0.1f}));
  return s;
}

}  // namespace

std::vector<std::string> fixture_names() {
  return {"drawer_table", "drawer_table_2", "door",
          "cabinet",      "faucet",         "switch"};
}

ObjectSpec fixture(const std::string& name) {
  ObjectSpec s;
  if (name == "drawer_table")
    s = make_drawer_table();
  else if (name == "drawer_table_2")
    s = make_drawer_table_2();
  else if (name == "door")
    s = make_door();
  else if (name == "cabinet")
    s = make_cabinet();
  else if (name == "faucet")
    s = make_faucet();
  else if (name == "switch")
    s = make_switch();
  else
    throw ConfigError("unknown fixture: " + name);
  s.validate();
  return s;
}

std::array<KeyPose, 4> scripted_witness(const ObjectSpec& spec,
                                        const WorldState& state, int part,
                                        int dir) {
  if (part < 0 || part >= static_cast<int>(spec.parts.size()))
    throw StateError("scripted_witness: part index out of range");
  if (dir != 1 && dir != -1)
    throw StateError("scripted_witness: dir must be +1 or -1");
  const PartSpec& p = spec.parts[part];
  float d = state.dof[part];
  Vec3 h = handle_world(p, d);
  // approach along the face normal the handle sticks out of; standoff 0.3
  // clears neighboring parts on the reach segments
  Vec3 p0 = h + 0.3f * handle_outward(p, d);

  float range = p.d_max - p.d_min;
  float avail = dir > 0 ? p.d_max - d : d - p.d_min;
  float delta = std::min(0.35f * range, avail) * static_cast<float>(dir);

  Vec3 p2;
  if (p.joint_kind == JointKind::Prismatic) {
    p2 = h + delta * p.axis;
  } else {
    Vec3 r = h - p.pivot;
    Vec3 radial = r - dot(r, p.axis) * p.axis;
    Vec3 tangent = normalized(cross(p.axis, radial));
    p2 = h + (delta * norm(radial)) * tangent;
  }
  return make_trajectory(p0, h, p2, Quat::identity());
}

}  // namespace aim
