#pragma once

// Deterministic articulated-object world. Parts are boxes on a single
// prismatic or revolute joint; the gripper is abstracted to the 4-keypose
// primitive (init, reach, grasp, manipulate). Everything is a value type and
// stepping is pure, so environments can run concurrently on separate states.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aim/error.hpp"

namespace aim {

struct Vec3 {
  float x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(float s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline float dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
float norm(Vec3 a);
Vec3 normalized(Vec3 a);  // throws NumericError on near-zero input

// Unit quaternion (w, x, y, z).
struct Quat {
  float w = 1, x = 0, y = 0, z = 0;

  static Quat identity() { return {}; }
  static Quat from_axis_angle(Vec3 axis, float angle);
  Quat normalized() const;
  float norm() const;
  Vec3 rotate(Vec3 v) const;
};

Quat operator*(Quat a, Quat b);
// Shortest-arc rotation taking direction a to direction b.
Quat rotation_between(Vec3 a, Vec3 b);
// Axis-angle 3-vector (axis * angle) of a unit quaternion, and back.
Vec3 quat_to_axis_angle(Quat q);
Quat quat_from_axis_angle_vec(Vec3 aa);

// Gripper keypose: position, orientation, open/closed bit.
struct KeyPose {
  Vec3 p;
  Quat R;
  int q = 0;  // 0 open, 1 closed
};

enum class JointKind { Prismatic, Revolute };

struct PartSpec {
  JointKind joint_kind = JointKind::Prismatic;
  Vec3 axis{1, 0, 0};        // slide direction or hinge axis, unit length
  Vec3 pivot;                // revolute only
  Vec3 origin;               // box center in world at joint value 0
  float d_min = 0, d_max = 1;
  Vec3 body{0.1f, 0.1f, 0.1f};  // box half-extents
  Vec3 handle_offset;           // in part frame, relative to origin
  Vec3 color{0.5f, 0.5f, 0.5f};
};

struct ObjectSpec {
  std::string name;
  std::vector<PartSpec> parts;
  float workspace = 1.0f;  // axis-aligned cube [-workspace, workspace]^3

  void validate() const;  // throws ConfigError on invariant violation
};

struct WorldState {
  std::vector<float> dof;
  KeyPose gripper_pose;
  std::optional<int> attached_part;
};

struct SimConfig {
  float grasp_radius = 0.05f;
  int collision_samples = 32;
  int points_per_part = 256;
  int gripper_points = 64;
  float success_frac = 0.3f;
};

struct ColoredPointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;
};

// Part-frame geometry at a given joint value.
Vec3 part_to_world(const PartSpec& part, float d, Vec3 local);
Vec3 world_to_part(const PartSpec& part, float d, Vec3 world);
Vec3 handle_world(const PartSpec& part, float d);
// Unit direction the handle protrudes from the box surface, in world frame.
Vec3 handle_outward(const PartSpec& part, float d);
bool point_in_part(const PartSpec& part, float d, Vec3 world);

enum class InitMode { HalfOpen, Random };

WorldState init_state(const ObjectSpec& spec, InitMode mode, std::uint64_t seed);

struct StepResult {
  WorldState state;
  bool ok = true;  // false = trajectory invalid (collision / out of workspace)
};

// Applies one keypose of the 4-phase primitive. Phases 0/1 move the open
// gripper (collision with any part body invalidates the trajectory), phase 2
// closes the jaws and attaches within grasp radius of a handle, phase 3 drags
// an attached part along its joint or pushes an unattached one closed.
StepResult step_keypose(const ObjectSpec& spec, const WorldState& state,
                        const KeyPose& a, int phase,
                        const SimConfig& cfg = SimConfig{});

// The sampled action primitive {(p0,R,0),(p1,R,0),(p1,R,1),(p2,R,1)}.
std::array<KeyPose, 4> make_trajectory(Vec3 p0, Vec3 p1, Vec3 p2, Quat R);

StepResult run_trajectory(const ObjectSpec& spec, const WorldState& state,
                          const std::array<KeyPose, 4>& traj,
                          const SimConfig& cfg = SimConfig{});

ColoredPointCloud render_cloud(const ObjectSpec& spec, const WorldState& state,
                               bool occlude_robot, std::uint64_t seed,
                               const SimConfig& cfg = SimConfig{});

// Per-part success = |d_f - d_0| / range > frac; overall = any part.
std::vector<bool> dof_success_per_part(const ObjectSpec& spec,
                                       const WorldState& init,
                                       const WorldState& final_state,
                                       float frac = 0.3f);
bool dof_success(const ObjectSpec& spec, const WorldState& init,
                 const WorldState& final_state, float frac = 0.3f);

// JSON spec I/O (schema in docs/object_spec.md).
ObjectSpec load_object_spec(const std::string& path);
void save_object_spec(const ObjectSpec& spec, const std::string& path);
ObjectSpec parse_object_spec(const std::string& json_text);

// Built-in fixture library.
std::vector<std::string> fixture_names();
ObjectSpec fixture(const std::string& name);

// Scripted witness reaching >30% DoF change on `part` from the given state.
// dir=+1 increases the joint value, dir=-1 decreases it.
std::array<KeyPose, 4> scripted_witness(const ObjectSpec& spec,
                                        const WorldState& state, int part,
                                        int dir);

}  // namespace aim
