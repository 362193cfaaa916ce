#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "csp/geom.hpp"
#include "json.hpp"

namespace csp::sim {

using geom::ArmModel;
using geom::Box;
using geom::JointPath;
using geom::Joints;
using geom::Pose;

enum class Material { Grippy, Slippery };

struct Object {
  double w = 0.1, h = 0.1;  // meters
  Pose pose;                // center of the box
  Material mat = Material::Grippy;

  Box box() const { return Box{pose.x, pose.y, w, h, pose.theta}; }
};

struct WorldState {
  std::vector<Object> objects;
  std::set<std::pair<int, int>> links;  // pairs stored with first < second
  Joints arm_q{0.0, 0.0, 0.0};
};

bool states_equal(const WorldState& a, const WorldState& b, double tol = 0.0);
uint64_t state_hash(const WorldState& s);

struct MacroAction {
  enum class Kind { PickPlace, AddConstraint, RemoveConstraint };
  Kind kind = Kind::PickPlace;
  int target = -1;  // PickPlace
  Pose goal;        // PickPlace
  int a = -1, b = -1;  // constraint pair
};

uint64_t macro_hash(const MacroAction& m);

enum class TaskId { BlockStack, PushAway, Bookshelf, MoveAny };

struct TaskSpec {
  TaskId id = TaskId::BlockStack;
  std::string name = "stack3";
  int stack_goal = 3;       // BlockStack: goal needs a block at (K-1)*h + h/2
  double cube_size = 0.1;   // h
  bool links_enabled = false;
  uint64_t placement_seed = 0;
  int target_index = -1;    // PushAway
  int book_index = -1;      // Bookshelf

  ArmModel arm;
  Joints home_q{2.6, 0.3, 0.3};

  // Workspace box for decoded goal poses.
  double ws_xmin = 0.15, ws_xmax = 0.72;
  double ws_ymin = 0.03, ws_ymax = 0.50;
  double ws_theta_range = M_PI / 2.0;

  double support_frac = 0.5;
  double slip_grippy = 35.0 * M_PI / 180.0;
  double slip_slippery = 5.0 * M_PI / 180.0;

  bool has_shelf = false;
  Box shelf;  // static pedestal; top surface at shelf.cy + shelf.h/2

  std::vector<Object> roster;  // objects with their nominal initial poses

  double reach_radius() const { return arm.reach(); }
  int k() const { return static_cast<int>(roster.size()); }
  int state_dim() const { return 3 * k() + (links_enabled ? k() * k() : 0); }
  int action_dim() const { return k() * k() + 4 * k() + 2; }  // dof = 3
  std::vector<Box> static_obstacles() const;

  WorldState initial_state() const;

  // stack2, stack3, stack5, pushaway, bookshelf, moveany
  static TaskSpec by_name(const std::string& name, uint64_t placement_seed);
  static TaskSpec block_stack(int k, uint64_t placement_seed, int goal_k = -1);
  static TaskSpec push_away(uint64_t placement_seed);
  static TaskSpec bookshelf(uint64_t placement_seed);
  static TaskSpec move_any(uint64_t placement_seed);

  nlohmann::json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

// Per-object (x, y, theta), then k^2 pairwise link indicators when enabled.
std::vector<double> flatten_state(const WorldState& s, bool links_enabled);

// Raw layout: [k^2 link logits][k blocks of (select logit, x, y, theta)][2 macro logits].
MacroAction decode_action(std::span<const double> raw, const WorldState& s, const TaskSpec& task);

struct PrimitiveStep {
  enum class Type { Move, Grasp, Release, Link, Unlink };
  Type type = Type::Move;
  JointPath path;      // Move
  int a = -1, b = -1;  // Grasp/Release use a; Link/Unlink use a,b
};

struct StepResult {
  std::vector<PrimitiveStep> primitives;
  WorldState next;
};

// Deterministic pure function of (state, macro); nullopt means Infeasible.
std::optional<StepResult> step_macro(const WorldState& s, const MacroAction& m,
                                     const TaskSpec& task);

// Quasi-static fixed point: drop onto supports (>= support_frac base overlap),
// slip off insufficient supports, slide down over-tilted supports, move linked
// assemblies rigidly, displace the shelf book on overlap.
WorldState settle(const WorldState& s, const TaskSpec& task);

bool is_goal(const WorldState& s, const TaskSpec& task);

constexpr int kImageSize = 84;
// 3 x 84 x 84 (CHW), values in [0,1].
std::vector<double> render(const WorldState& s, const TaskSpec& task);

nlohmann::json state_to_json(const WorldState& s);
WorldState state_from_json(const nlohmann::json& j);
nlohmann::json macro_to_json(const MacroAction& m);
MacroAction macro_from_json(const nlohmann::json& j);

}  // namespace csp::sim
