#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace csp::geom {

struct Pose {
  double x = 0.0, y = 0.0, theta = 0.0;
};

// Oriented rectangle, center + half-extents via w/h, rotated by theta.
struct Box {
  double cx = 0.0, cy = 0.0;
  double w = 0.0, h = 0.0;
  double theta = 0.0;
};

using Joints = std::array<double, 3>;

struct ArmModel {
  double base_x = 0.0, base_y = 0.0;
  std::array<double, 3> link_len{0.3, 0.25, 0.2};
  std::array<std::pair<double, double>, 3> bounds{{{-3.0, 3.0}, {-3.0, 3.0}, {-3.0, 3.0}}};

  double reach() const { return link_len[0] + link_len[1] + link_len[2]; }
  bool within_bounds(const Joints& q) const;
};

Pose forward_kinematics(const ArmModel& arm, const Joints& q);

// Joint positions: base, elbow1, elbow2, end effector.
std::array<std::pair<double, double>, 4> arm_points(const ArmModel& arm, const Joints& q);

// True iff segment (a,b) intersects the box (exact slab test in box frame).
bool segment_box_intersect(double ax, double ay, double bx, double by, const Box& box);
bool boxes_overlap(const Box& a, const Box& b, double tol = 0.0);
bool point_in_box(double px, double py, const Box& box);

struct IkParams {
  int max_iters = 200;
  int restarts = 8;
  double damping = 0.1;
  double pos_tol = 1e-4;   // meters
  double ang_tol = 1e-3;   // radians
};

// Damped-least-squares Jacobian IK. With constrain_orientation=false the
// orientation residual is dropped (2x3 Jacobian). Returns nullopt on
// unreachable targets or when all restarts fail.
std::optional<Joints> ik_solve(const ArmModel& arm, const Pose& target,
                               bool constrain_orientation, uint64_t seed,
                               const IkParams& params = {});

// Arm self-representation vs world obstacles; held, when present, is rigidly
// attached to the end effector (held->pose expressed relative to ee frame).
struct HeldObject {
  double off_x = 0.0, off_y = 0.0, off_theta = 0.0;  // in ee frame
  double w = 0.0, h = 0.0;
};

// True iff the arm (or the held object) collides with any obstacle.
bool collision_check(const ArmModel& arm, const Joints& q, std::span<const Box> obstacles,
                     const std::optional<HeldObject>& held = std::nullopt);

struct JointPath {
  std::vector<Joints> waypoints;
};

struct RrtParams {
  double step = 0.1;         // rad, extension step
  double resolution = 0.01;  // rad, collision-check resolution along edges
  int max_samples = 5000;
};

// True iff the straight joint-space segment q0->q1 is collision-free at the
// given resolution (endpoints included).
bool edge_collision_free(const ArmModel& arm, const Joints& a, const Joints& b,
                         std::span<const Box> obstacles, const std::optional<HeldObject>& held,
                         double resolution);

// RRT-Connect in joint space. Deterministic under a fixed seed. Requires
// collision-free endpoints (throws otherwise). Tries the direct segment first.
std::optional<JointPath> rrt_connect(const ArmModel& arm, const Joints& q_start,
                                     const Joints& q_goal, std::span<const Box> obstacles,
                                     const std::optional<HeldObject>& held, uint64_t seed,
                                     const RrtParams& params = {});

}  // namespace csp::geom
