#include "csp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::sim {

namespace {

constexpr double kGroundEps = 1e-9;
constexpr double kContactTol = 0.02;    // AddConstraint "touching" tolerance
constexpr double kHeldShrink = 0.002;   // clearance margin for swept/placement checks
constexpr double kBookShove = 0.15;

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

double horiz_half(const Object& o) {
  return 0.5 * o.w * std::abs(std::cos(o.pose.theta)) +
         0.5 * o.h * std::abs(std::sin(o.pose.theta));
}

double vert_half(const Object& o) {
  return 0.5 * o.w * std::abs(std::sin(o.pose.theta)) +
         0.5 * o.h * std::abs(std::cos(o.pose.theta));
}

Box ground_box() { return Box{0.0, -0.5, 20.0, 1.0, 0.0}; }

// Connected components under the link relation.
std::vector<std::vector<int>> components(const WorldState& s) {
  const int n = static_cast<int>(s.objects.size());
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    std::vector<int> stack{i}, members;
    comp[i] = static_cast<int>(out.size());
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      members.push_back(u);
      for (const auto& [a, b] : s.links) {
        const int v = (a == u) ? b : (b == u ? a : -1);
        if (v >= 0 && comp[v] < 0) {
          comp[v] = comp[i];
          stack.push_back(v);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

std::vector<int> component_of(const WorldState& s, int idx) {
  for (auto& c : components(s))
    if (std::find(c.begin(), c.end(), idx) != c.end()) return c;
  return {idx};
}

struct Extent {
  double xmin, xmax, bottom, top;
};

Extent comp_extent(const WorldState& s, const std::vector<int>& members) {
  Extent e{1e30, -1e30, 1e30, -1e30};
  for (int i : members) {
    const Object& o = s.objects[i];
    const double hw = horiz_half(o), vh = vert_half(o);
    e.xmin = std::min(e.xmin, o.pose.x - hw);
    e.xmax = std::max(e.xmax, o.pose.x + hw);
    e.bottom = std::min(e.bottom, o.pose.y - vh);
    e.top = std::max(e.top, o.pose.y + vh);
  }
  return e;
}

struct Support {
  double xmin, xmax, top, theta, cx, hw;
};

double interval_overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Total overlap of [a0,a1] with the union of the supports' intervals.
double union_overlap(double a0, double a1, const std::vector<const Support*>& sups) {
  std::vector<std::pair<double, double>> iv;
  for (const auto* s : sups) {
    const double lo = std::max(a0, s->xmin), hi = std::min(a1, s->xmax);
    if (hi > lo) iv.emplace_back(lo, hi);
  }
  std::sort(iv.begin(), iv.end());
  double total = 0.0, cur = a0;
  for (const auto& [lo, hi] : iv) {
    const double l = std::max(lo, cur);
    if (hi > l) {
      total += hi - l;
      cur = hi;
    }
  }
  return total;
}

// Drops / slips / slides one component; true if anything moved.
bool drop_component(WorldState& s, const TaskSpec& task, const std::vector<int>& members,
                    const std::vector<std::vector<int>>& comps, size_t self) {
  bool moved = false;
  int slip_dir = 0;  // sticky within one drop: stops left/right ping-pong
  for (int guard = 0; guard < 100; ++guard) {
    const Extent e = comp_extent(s, members);
    const double width = e.xmax - e.xmin;

    // Candidate support surfaces: member boxes of other components plus the shelf.
    std::vector<Support> cands;
    for (size_t ci = 0; ci < comps.size(); ++ci) {
      if (ci == self) continue;
      for (int oi : comps[ci]) {
        const Object& o = s.objects[oi];
        const double hw = horiz_half(o), vh = vert_half(o);
        cands.push_back({o.pose.x - hw, o.pose.x + hw, o.pose.y + vh,
                         wrap_angle(o.pose.theta), o.pose.x, hw});
      }
    }
    if (task.has_shelf)
      cands.push_back({task.shelf.cx - task.shelf.w * 0.5, task.shelf.cx + task.shelf.w * 0.5,
                       task.shelf.cy + task.shelf.h * 0.5, 0.0, task.shelf.cx,
                       task.shelf.w * 0.5});

    // Highest support level below the mover with any horizontal overlap.
    double level = 0.0;  // ground
    bool on_ground = true;
    for (const auto& c : cands) {
      if (c.top > e.bottom + kGroundEps) continue;
      if (interval_overlap(e.xmin, e.xmax, c.xmin, c.xmax) <= 1e-12) continue;
      if (on_ground || c.top > level) {
        level = c.top;
        on_ground = false;
      }
    }

    if (on_ground) {
      if (e.bottom > kGroundEps) {
        const double dy = -e.bottom;
        for (int i : members) s.objects[i].pose.y += dy;
        moved = true;
      }
      return moved;
    }

    std::vector<const Support*> at_level;
    for (const auto& c : cands)
      if (std::abs(c.top - level) <= kGroundEps &&
          interval_overlap(e.xmin, e.xmax, c.xmin, c.xmax) > 1e-12)
        at_level.push_back(&c);

    const double overlap = union_overlap(e.xmin, e.xmax, at_level);
    const Support* dominant = at_level.front();
    double best = -1.0;
    for (const auto* c : at_level) {
      const double ov = interval_overlap(e.xmin, e.xmax, c->xmin, c->xmax);
      if (ov > best) {
        best = ov;
        dominant = c;
      }
    }

    if (overlap + 1e-12 >= task.support_frac * width) {
      if (level < e.bottom - kGroundEps) {
        const double dy = level - e.bottom;
        for (int i : members) s.objects[i].pose.y += dy;
        moved = true;
      }
      // Over-tilted support: a lone block slides to the low end and off.
      if (members.size() == 1) {
        const Object& m = s.objects[members[0]];
        const double phi =
            m.mat == Material::Slippery ? task.slip_slippery : task.slip_grippy;
        const double th = dominant->theta;
        if (std::abs(th) > phi && std::abs(std::sin(th)) > 1e-12) {
          const double dir = std::sin(th) > 0.0 ? -1.0 : 1.0;  // downhill
          const double low_x = dominant->cx + dir * dominant->hw;
          const double hw = horiz_half(m);
          s.objects[members[0]].pose.x = low_x + dir * (hw + 1e-6);
          moved = true;
          continue;  // re-settle from the new spot
        }
      }
      return moved;
    }

    // Insufficient support: slip sideways off the dominant support, keep falling.
    const double ccx = 0.5 * (e.xmin + e.xmax);
    if (slip_dir == 0) slip_dir = ccx >= dominant->cx ? 1 : -1;
    double dx;
    if (slip_dir > 0) {
      dx = (dominant->xmax + 1e-6) - e.xmin;
    } else {
      dx = (dominant->xmin - 1e-6) - e.xmax;
    }
    for (int i : members) s.objects[i].pose.x += dx;
    moved = true;
  }
  throw std::runtime_error("settle: component failed to converge");
}

bool settle_pass(WorldState& s, const TaskSpec& task) {
  // Book displacement: anything overlapping the book shoves it off the shelf.
  if (task.book_index >= 0) {
    Object& book = s.objects[task.book_index];
    for (size_t i = 0; i < s.objects.size(); ++i) {
      if (static_cast<int>(i) == task.book_index) continue;
      if (geom::boxes_overlap(s.objects[i].box(), book.box())) {
        book.pose.x += kBookShove;
        return true;
      }
    }
  }

  const auto comps = components(s);
  std::vector<size_t> order(comps.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return comp_extent(s, comps[a]).top > comp_extent(s, comps[b]).top;
  });
  for (size_t ci : order)
    if (drop_component(s, task, comps[ci], comps, ci)) return true;
  return false;
}

bool arm_touches_box(const ArmModel& arm, const Joints& q, const Box& b) {
  const auto pts = geom::arm_points(arm, q);
  for (int i = 0; i < 3; ++i)
    if (geom::segment_box_intersect(pts[i].first, pts[i].second, pts[i + 1].first,
                                    pts[i + 1].second, b))
      return true;
  return false;
}

}  // namespace

bool states_equal(const WorldState& a, const WorldState& b, double tol) {
  if (a.objects.size() != b.objects.size() || a.links != b.links) return false;
  auto near = [tol](double x, double y) { return std::abs(x - y) <= tol; };
  for (size_t i = 0; i < a.objects.size(); ++i) {
    const auto &oa = a.objects[i], &ob = b.objects[i];
    if (!near(oa.pose.x, ob.pose.x) || !near(oa.pose.y, ob.pose.y) ||
        !near(oa.pose.theta, ob.pose.theta))
      return false;
  }
  for (int i = 0; i < 3; ++i)
    if (!near(a.arm_q[i], b.arm_q[i])) return false;
  return true;
}

uint64_t state_hash(const WorldState& s) {
  uint64_t h = 14695981039346656037ull;
  for (const auto& o : s.objects) {
    const double d[5] = {o.w, o.h, o.pose.x, o.pose.y, o.pose.theta};
    h = hash_bytes(d, sizeof(d), h);
    h = hash_combine(h, o.mat == Material::Slippery ? 1 : 0);
  }
  for (const auto& [a, b] : s.links) h = hash_combine(hash_combine(h, a), b);
  h = hash_bytes(s.arm_q.data(), sizeof(double) * 3, h);
  return h;
}

uint64_t macro_hash(const MacroAction& m) {
  uint64_t h = hash_combine(14695981039346656037ull, static_cast<int>(m.kind));
  h = hash_combine(h, m.target);
  const double d[3] = {m.goal.x, m.goal.y, m.goal.theta};
  h = hash_bytes(d, sizeof(d), h);
  h = hash_combine(hash_combine(h, m.a), m.b);
  return h;
}

std::vector<Box> TaskSpec::static_obstacles() const {
  std::vector<Box> out{ground_box()};
  if (has_shelf) out.push_back(shelf);
  return out;
}

WorldState TaskSpec::initial_state() const {
  WorldState s;
  s.objects = roster;
  s.arm_q = home_q;
  return s;
}

std::vector<double> flatten_state(const WorldState& s, bool links_enabled) {
  const int k = static_cast<int>(s.objects.size());
  std::vector<double> out;
  out.reserve(3 * k + (links_enabled ? k * k : 0));
  for (const auto& o : s.objects) {
    out.push_back(o.pose.x);
    out.push_back(o.pose.y);
    out.push_back(o.pose.theta);
  }
  if (links_enabled) {
    std::vector<double> ind(static_cast<size_t>(k) * k, 0.0);
    for (const auto& [a, b] : s.links) {
      ind[static_cast<size_t>(a) * k + b] = 1.0;
      ind[static_cast<size_t>(b) * k + a] = 1.0;
    }
    out.insert(out.end(), ind.begin(), ind.end());
  }
  return out;
}

MacroAction decode_action(std::span<const double> raw, const WorldState& s,
                          const TaskSpec& task) {
  const int k = task.k();
  if (static_cast<int>(raw.size()) != task.action_dim())
    throw std::invalid_argument("decode_action: expected dimension " +
                                std::to_string(task.action_dim()) + ", got " +
                                std::to_string(raw.size()));

  const int link_off = 0;
  const int obj_off = k * k;
  const int macro_off = k * k + 4 * k;

  const bool pick = k < 2 || raw[macro_off] >= raw[macro_off + 1];
  MacroAction m;
  if (pick) {
    m.kind = MacroAction::Kind::PickPlace;
    int best = 0;
    for (int i = 1; i < k; ++i)
      if (raw[obj_off + 4 * i] > raw[obj_off + 4 * best]) best = i;
    m.target = best;
    auto squash = [](double v, double lo, double hi) {
      const double t = std::tanh(v);
      return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
    };
    m.goal.x = squash(raw[obj_off + 4 * best + 1], task.ws_xmin, task.ws_xmax);
    m.goal.y = squash(raw[obj_off + 4 * best + 2], task.ws_ymin, task.ws_ymax);
    m.goal.theta = squash(raw[obj_off + 4 * best + 3], -task.ws_theta_range,
                          task.ws_theta_range);
  } else {
    // Upper triangle only; diagonal and mirrored entries are ignored.
    int bi = 0, bj = 1;
    double bv = raw[link_off + 0 * k + 1];
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j)
        if (raw[link_off + i * k + j] > bv) {
          bv = raw[link_off + i * k + j];
          bi = i;
          bj = j;
        }
    m.a = bi;
    m.b = bj;
    m.kind = s.links.count({bi, bj}) ? MacroAction::Kind::RemoveConstraint
                                     : MacroAction::Kind::AddConstraint;
  }
  return m;
}

WorldState settle(const WorldState& s, const TaskSpec& task) {
  WorldState cur = s;
  for (int pass = 0; pass < 1000; ++pass) {
    if (!settle_pass(cur, task)) return cur;
  }
  throw std::runtime_error("settle: no fixed point after 1000 passes");
}

namespace {

// Transforms the grasped assembly so that object `target` lands on `goal`.
void place_assembly(WorldState& s, const std::vector<int>& members, int target,
                    const Pose& goal) {
  const Pose base = s.objects[target].pose;
  const double dth = goal.theta - base.theta;
  const double c = std::cos(dth), sn = std::sin(dth);
  for (int i : members) {
    Object& o = s.objects[i];
    const double rx = o.pose.x - base.x, ry = o.pose.y - base.y;
    o.pose.x = goal.x + c * rx - sn * ry;
    o.pose.y = goal.y + sn * rx + c * ry;
    o.pose.theta = wrap_angle(o.pose.theta + dth);
  }
}

geom::HeldObject assembly_held_box(const WorldState& s, const std::vector<int>& members,
                                   int target, double ee_theta) {
  // Bounding box of all member corners in the grasped object's frame; using
  // the object frame (not the end-effector frame) keeps the box tight, so a
  // single grasped block is represented by its own outline.
  const double ex = s.objects[target].pose.x, ey = s.objects[target].pose.y;
  const double box_theta = s.objects[target].pose.theta;
  const double c = std::cos(box_theta), sn = std::sin(box_theta);
  double xmin = 1e30, xmax = -1e30, ymin = 1e30, ymax = -1e30;
  for (int i : members) {
    const Object& o = s.objects[i];
    const double co = std::cos(o.pose.theta), so = std::sin(o.pose.theta);
    for (int sx = -1; sx <= 1; sx += 2) {
      for (int sy = -1; sy <= 1; sy += 2) {
        const double wx = o.pose.x + sx * 0.5 * o.w * co - sy * 0.5 * o.h * so;
        const double wy = o.pose.y + sx * 0.5 * o.w * so + sy * 0.5 * o.h * co;
        const double lx = c * (wx - ex) + sn * (wy - ey);
        const double ly = -sn * (wx - ex) + c * (wy - ey);
        xmin = std::min(xmin, lx);
        xmax = std::max(xmax, lx);
        ymin = std::min(ymin, ly);
        ymax = std::max(ymax, ly);
      }
    }
  }
  // Convert the object-frame box into end-effector-frame offsets.
  const double cxl = 0.5 * (xmin + xmax), cyl = 0.5 * (ymin + ymax);
  const double rel = box_theta - ee_theta;
  const double cr = std::cos(rel), sr = std::sin(rel);
  geom::HeldObject held;
  held.off_x = cr * cxl - sr * cyl;
  held.off_y = sr * cxl + cr * cyl;
  held.off_theta = rel;
  held.w = std::max(0.0, (xmax - xmin) - 2.0 * kHeldShrink);
  held.h = std::max(0.0, (ymax - ymin) - 2.0 * kHeldShrink);
  return held;
}

std::optional<Joints> reachable_config(const ArmModel& arm, const Pose& target,
                                       bool constrain_orientation, std::span<const Box> obstacles,
                                       uint64_t seed) {
  for (int attempt = 0; attempt < 6; ++attempt) {
    const auto q = geom::ik_solve(arm, target, constrain_orientation,
                                  hash_combine(seed, attempt));
    if (!q) return std::nullopt;
    if (!geom::collision_check(arm, *q, obstacles)) return q;
  }
  return std::nullopt;
}

}  // namespace

std::optional<StepResult> step_macro(const WorldState& s, const MacroAction& m,
                                     const TaskSpec& task) {
  const int k = task.k();
  const uint64_t seed = hash_combine(state_hash(s), macro_hash(m));
  const ArmModel& arm = task.arm;
  const auto statics = task.static_obstacles();

  if (m.kind == MacroAction::Kind::PickPlace) {
    if (m.target < 0 || m.target >= k)
      throw std::invalid_argument("step_macro: PickPlace target out of range");
    if (m.goal.x < task.ws_xmin - 1e-9 || m.goal.x > task.ws_xmax + 1e-9 ||
        m.goal.y < task.ws_ymin - 1e-9 || m.goal.y > task.ws_ymax + 1e-9)
      return std::nullopt;

    const Object& tgt = s.objects[m.target];
    auto dist_from_base = [&](double x, double y) {
      const double dx = x - arm.base_x, dy = y - arm.base_y;
      return std::sqrt(dx * dx + dy * dy);
    };
    if (dist_from_base(tgt.pose.x, tgt.pose.y) > arm.reach()) return std::nullopt;
    if (dist_from_base(m.goal.x, m.goal.y) > arm.reach()) return std::nullopt;

    const auto members = component_of(s, m.target);

    // Obstacles: statics plus every object outside the grasped assembly.
    std::vector<Box> obstacles(statics.begin(), statics.end());
    for (int i = 0; i < k; ++i)
      if (std::find(members.begin(), members.end(), i) == members.end())
        obstacles.push_back(s.objects[i].box());

    // Placement must not interpenetrate anything (grasp-independent).
    WorldState placed = s;
    place_assembly(placed, members, m.target, m.goal);
    for (int i : members) {
      const Object& o = placed.objects[i];
      if (o.pose.y - vert_half(o) < -1e-9) return std::nullopt;
      for (const Box& b : obstacles)
        if (geom::boxes_overlap(o.box(), b, -kHeldShrink)) return std::nullopt;
    }
    if (geom::collision_check(arm, s.arm_q, obstacles)) return std::nullopt;

    // The assembly is rigid in the gripper, so the end-effector angle at the
    // place config is pinned by the grasp-time angle. Sweep a deterministic
    // fan of approach angles (steep, clutter-clearing ones first), falling
    // back to unconstrained solves, before declaring the macro infeasible.
    constexpr double kApproach[] = {-M_PI / 2, -3 * M_PI / 8, -5 * M_PI / 8, -M_PI / 4,
                                    -3 * M_PI / 4, -M_PI / 8, 0.0};
    constexpr int kAttempts = 9;
    std::optional<Joints> q_grasp, q_place;
    std::optional<geom::HeldObject> held;
    std::optional<geom::JointPath> path2;
    for (int attempt = 0; attempt < kAttempts && !path2; ++attempt) {
      const uint64_t aseed = hash_combine(seed, 16 + attempt);
      const bool fanned = attempt < 7;
      const double approach = fanned ? kApproach[attempt] : 0.0;
      const auto qg = reachable_config(arm, Pose{tgt.pose.x, tgt.pose.y, approach},
                                       /*constrain_orientation=*/fanned, obstacles,
                                       hash_combine(aseed, 1));
      if (!qg) continue;
      const double ee_grasp = (*qg)[0] + (*qg)[1] + (*qg)[2];
      const auto hb = assembly_held_box(s, members, m.target, ee_grasp);
      const double place_theta = wrap_angle(m.goal.theta + ee_grasp - tgt.pose.theta);
      const auto qp = reachable_config(arm, Pose{m.goal.x, m.goal.y, place_theta},
                                       /*constrain_orientation=*/true, obstacles,
                                       hash_combine(aseed, 2));
      if (!qp) continue;
      if (geom::collision_check(arm, *qg, obstacles, hb) ||
          geom::collision_check(arm, *qp, obstacles, hb))
        continue;
      path2 = geom::rrt_connect(arm, *qg, *qp, obstacles, hb, hash_combine(aseed, 4));
      if (path2) {
        q_grasp = qg;
        q_place = qp;
        held = hb;
      }
    }
    if (!path2) return std::nullopt;

    auto path1 = geom::rrt_connect(arm, s.arm_q, *q_grasp, obstacles, std::nullopt,
                                   hash_combine(seed, 3));
    if (!path1) return std::nullopt;

    placed.arm_q = *q_place;
    StepResult res;
    res.next = settle(placed, task);
    res.primitives.push_back({PrimitiveStep::Type::Move, std::move(*path1), -1, -1});
    res.primitives.push_back({PrimitiveStep::Type::Grasp, {}, m.target, -1});
    res.primitives.push_back({PrimitiveStep::Type::Move, std::move(*path2), -1, -1});
    res.primitives.push_back({PrimitiveStep::Type::Release, {}, m.target, -1});

    // Retreat: the gripper released the assembly with the end effector at its
    // grasp point, so first pull straight back along the wrist axis until the
    // arm clears the released blocks, then return home when the way is free.
    // The short retract is checked against everything except the released
    // assembly, whose interior the gripper vacates.
    std::vector<Box> after(statics.begin(), statics.end());
    for (const auto& o : res.next.objects) after.push_back(o.box());
    std::vector<Box> after_sans(statics.begin(), statics.end());
    for (int i = 0; i < k; ++i)
      if (std::find(members.begin(), members.end(), i) == members.end())
        after_sans.push_back(res.next.objects[i].box());
    const auto place_pts = geom::arm_points(arm, *q_place);
    const double place_ee = (*q_place)[0] + (*q_place)[1] + (*q_place)[2];
    const double back = 0.5 * std::hypot(held->w, held->h) + 0.03;
    const Pose retreat_pose{place_pts[3].first - back * std::cos(place_ee),
                            place_pts[3].second - back * std::sin(place_ee), place_ee};
    const auto q_r = geom::ik_solve(arm, retreat_pose, /*constrain_orientation=*/true,
                                    hash_combine(seed, 5));
    if (q_r && !geom::collision_check(arm, *q_r, after) &&
        geom::edge_collision_free(arm, *q_place, *q_r, after_sans, std::nullopt, 0.01)) {
      res.primitives.push_back(
          {PrimitiveStep::Type::Move, geom::JointPath{{*q_place, *q_r}}, -1, -1});
      res.next.arm_q = *q_r;
      if (geom::edge_collision_free(arm, *q_r, task.home_q, after, std::nullopt, 0.01)) {
        res.next.arm_q = task.home_q;
        res.primitives.push_back(
            {PrimitiveStep::Type::Move, geom::JointPath{{*q_r, task.home_q}}, -1, -1});
      }
    } else if (geom::edge_collision_free(arm, *q_place, task.home_q, after, std::nullopt,
                                         0.01)) {
      res.next.arm_q = task.home_q;
      res.primitives.push_back(
          {PrimitiveStep::Type::Move, geom::JointPath{{*q_place, task.home_q}}, -1, -1});
    }
    return res;
  }

  // Constraint macros.
  int a = m.a, b = m.b;
  if (a > b) std::swap(a, b);
  if (a < 0 || b >= k || a == b)
    throw std::invalid_argument("step_macro: constraint pair out of range");
  if (!task.links_enabled) return std::nullopt;

  const Object &oa = s.objects[a], &ob = s.objects[b];
  auto in_reach = [&](const Object& o) {
    const double dx = o.pose.x - arm.base_x, dy = o.pose.y - arm.base_y;
    return std::sqrt(dx * dx + dy * dy) <= arm.reach();
  };
  if (!in_reach(oa) || !in_reach(ob)) return std::nullopt;

  const bool linked = s.links.count({a, b}) > 0;
  if (m.kind == MacroAction::Kind::AddConstraint) {
    if (linked) return std::nullopt;
    if (!geom::boxes_overlap(oa.box(), ob.box(), kContactTol)) return std::nullopt;
    StepResult res;
    res.next = s;
    res.next.links.insert({a, b});
    res.next = settle(res.next, task);
    res.primitives.push_back({PrimitiveStep::Type::Link, {}, a, b});
    return res;
  }
  // RemoveConstraint
  if (!linked) return std::nullopt;
  StepResult res;
  res.next = s;
  res.next.links.erase({a, b});
  res.next = settle(res.next, task);
  res.primitives.push_back({PrimitiveStep::Type::Unlink, {}, a, b});
  return res;
}

bool is_goal(const WorldState& s, const TaskSpec& task) {
  switch (task.id) {
    case TaskId::BlockStack: {
      const double threshold =
          (task.stack_goal - 1) * task.cube_size + 0.5 * task.cube_size;
      for (const auto& o : s.objects) {
        if (o.pose.y + 1e-9 < threshold) continue;
        if (arm_touches_box(task.arm, s.arm_q, o.box())) continue;
        // Stability analog: the state is a settle fixed point.
        if (states_equal(settle(s, task), s, 1e-9)) return true;
      }
      return false;
    }
    case TaskId::PushAway: {
      const Object& t = s.objects[task.target_index];
      const double dx = t.pose.x - task.arm.base_x, dy = t.pose.y - task.arm.base_y;
      return dx * dx + dy * dy > task.reach_radius() * task.reach_radius();
    }
    case TaskId::Bookshelf: {
      const double shelf_top = task.shelf.cy + 0.5 * task.shelf.h;
      return s.objects[task.book_index].pose.y < shelf_top;
    }
    case TaskId::MoveAny: {
      const WorldState init = task.initial_state();
      for (size_t i = 0; i < s.objects.size(); ++i) {
        const auto &o = s.objects[i], &o0 = init.objects[i];
        if (std::abs(o.pose.x - o0.pose.x) > 1e-6 ||
            std::abs(o.pose.y - o0.pose.y) > 1e-6 ||
            std::abs(o.pose.theta - o0.pose.theta) > 1e-6)
          return true;
      }
      return false;
    }
  }
  return false;
}

std::vector<double> render(const WorldState& s, const TaskSpec& task) {
  // Viewport: x in (0.01, 1.41), y in (-0.02, 1.38); 60 px/m.
  constexpr double x0 = 0.01, y0 = -0.02, scale = 60.0;
  const int n = kImageSize;
  std::vector<double> img(3 * n * n, 0.08);  // background

  static const double palette[8][3] = {
      {0.85, 0.2, 0.2}, {0.2, 0.55, 0.9}, {0.2, 0.8, 0.3}, {0.9, 0.8, 0.2},
      {0.7, 0.3, 0.8},  {0.9, 0.5, 0.15}, {0.3, 0.8, 0.8}, {0.8, 0.4, 0.6}};

  auto put = [&](int px, int py, double r, double g, double b) {
    if (px < 0 || px >= n || py < 0 || py >= n) return;
    const int row = n - 1 - py;  // y up
    img[0 * n * n + row * n + px] = r;
    img[1 * n * n + row * n + px] = g;
    img[2 * n * n + row * n + px] = b;
  };

  for (int py = 0; py < n; ++py) {
    for (int px = 0; px < n; ++px) {
      const double wx = x0 + (px + 0.5) / scale;
      const double wy = y0 + (py + 0.5) / scale;
      if (wy < 0.0) {
        put(px, py, 0.35, 0.3, 0.25);  // ground
        continue;
      }
      if (task.has_shelf && geom::point_in_box(wx, wy, task.shelf)) {
        put(px, py, 0.45, 0.45, 0.5);
        continue;
      }
      for (size_t i = 0; i < s.objects.size(); ++i) {
        if (geom::point_in_box(wx, wy, s.objects[i].box())) {
          const auto& c = palette[i % 8];
          put(px, py, c[0], c[1], c[2]);
          break;
        }
      }
    }
  }

  // Arm on top, sampled densely along each segment.
  const auto pts = geom::arm_points(task.arm, s.arm_q);
  for (int seg = 0; seg < 3; ++seg) {
    const auto [ax, ay] = pts[seg];
    const auto [bx, by] = pts[seg + 1];
    for (int t = 0; t <= 100; ++t) {
      const double wx = ax + (bx - ax) * t / 100.0;
      const double wy = ay + (by - ay) * t / 100.0;
      const int px = static_cast<int>(std::floor((wx - x0) * scale));
      const int py = static_cast<int>(std::floor((wy - y0) * scale));
      put(px, py, 0.9, 0.9, 0.9);
    }
  }
  return img;
}

// ---- task factories ----

namespace {

ArmModel default_arm() {
  ArmModel arm;
  arm.base_x = 0.0;
  arm.base_y = 0.15;
  arm.link_len = {0.3, 0.25, 0.2};
  arm.bounds = {{{-3.1, 3.1}, {-3.1, 3.1}, {-3.1, 3.1}}};
  return arm;
}

// Evenly spaced ground slots with seed-dependent jitter and ordering.
std::vector<double> ground_slots(int count, double lo, double hi, double min_gap,
                                 uint64_t seed) {
  std::vector<double> xs(count);
  if (count == 1) {
    xs[0] = 0.5 * (lo + hi);
  } else {
    const double gap = (hi - lo) / (count - 1);
    const double jitter = std::min(0.03, std::max(0.0, 0.5 * (gap - min_gap)));
    std::mt19937_64 rng(mix_seed(seed));
    std::uniform_real_distribution<double> dj(-jitter, jitter);
    for (int i = 0; i < count; ++i) xs[i] = lo + i * gap + dj(rng);
    std::shuffle(xs.begin(), xs.end(), rng);
  }
  return xs;
}

}  // namespace

TaskSpec TaskSpec::block_stack(int k, uint64_t placement_seed, int goal_k) {
  TaskSpec t;
  t.id = TaskId::BlockStack;
  t.name = "stack" + std::to_string(goal_k > 0 ? goal_k : k);
  t.stack_goal = goal_k > 0 ? goal_k : k;
  t.links_enabled = false;
  t.placement_seed = placement_seed;
  t.arm = default_arm();
  const auto xs = ground_slots(k, 0.20, 0.68, t.cube_size + 0.02, placement_seed);
  for (int i = 0; i < k; ++i) {
    Object o;
    o.w = o.h = t.cube_size;
    o.pose = {xs[i], t.cube_size * 0.5, 0.0};
    o.mat = Material::Grippy;
    t.roster.push_back(o);
  }
  return t;
}

TaskSpec TaskSpec::push_away(uint64_t placement_seed) {
  TaskSpec t;
  t.id = TaskId::PushAway;
  t.name = "pushaway";
  t.links_enabled = false;
  t.placement_seed = placement_seed;
  t.arm = default_arm();

  std::mt19937_64 rng(mix_seed(placement_seed));
  std::uniform_real_distribution<double> dj(-0.01, 0.01);

  // 0: slippery target, 1: plank, 2-3: support cubes (far-side table), 4: spare.
  // Target and spare sit in the open near the base; the table is on the far
  // side so a tilted plank on it becomes a ramp past the reach radius.
  Object target;
  target.w = target.h = 0.08;
  target.mat = Material::Slippery;
  target.pose = {0.22 + dj(rng), 0.04, 0.0};

  Object c1;
  c1.w = c1.h = 0.14;
  c1.pose = {0.50 + dj(rng), 0.07, 0.0};
  Object c2 = c1;
  c2.pose = {0.64 + dj(rng), 0.07, 0.0};

  Object plank;
  plank.w = 0.36;
  plank.h = 0.04;
  plank.pose = {0.5 * (c1.pose.x + c2.pose.x), 0.16, 0.0};

  Object spare;
  spare.w = spare.h = 0.10;
  spare.pose = {0.34 + dj(rng), 0.05, 0.0};

  t.roster = {target, plank, c1, c2, spare};
  t.target_index = 0;
  return t;
}

TaskSpec TaskSpec::bookshelf(uint64_t placement_seed) {
  TaskSpec t;
  t.id = TaskId::Bookshelf;
  t.name = "bookshelf";
  t.links_enabled = true;
  t.placement_seed = placement_seed;
  t.arm = default_arm();
  t.has_shelf = true;
  t.shelf = Box{1.10, 0.15, 0.30, 0.30, 0.0};  // top surface at y = 0.30

  std::mt19937_64 rng(mix_seed(placement_seed));
  std::uniform_real_distribution<double> dj(-0.02, 0.02);

  Object rod1;
  rod1.w = 0.35;
  rod1.h = 0.04;
  rod1.pose = {0.28 + dj(rng), 0.02, 0.0};
  Object rod2 = rod1;
  rod2.pose = {0.62 + dj(rng), 0.02, 0.0};

  Object book;
  book.w = 0.06;
  book.h = 0.12;
  book.pose = {1.12, 0.36, 0.0};  // resting on the shelf, beyond arm + one rod

  t.roster = {rod1, rod2, book};
  t.book_index = 2;
  return t;
}

TaskSpec TaskSpec::move_any(uint64_t placement_seed) {
  TaskSpec t = block_stack(2, placement_seed);
  t.id = TaskId::MoveAny;
  t.name = "moveany";
  return t;
}

TaskSpec TaskSpec::by_name(const std::string& name, uint64_t placement_seed) {
  if (name == "stack2") return block_stack(2, placement_seed);
  if (name == "stack3") return block_stack(3, placement_seed);
  if (name == "stack5") return block_stack(5, placement_seed);
  if (name == "stack2of3") return block_stack(3, placement_seed, 2);
  if (name == "pushaway") return push_away(placement_seed);
  if (name == "bookshelf") return bookshelf(placement_seed);
  if (name == "moveany") return move_any(placement_seed);
  throw std::invalid_argument("unknown task: " + name);
}

// ---- serialization ----

nlohmann::json state_to_json(const WorldState& s) {
  nlohmann::json jo = nlohmann::json::array();
  for (const auto& o : s.objects)
    jo.push_back({{"w", o.w}, {"h", o.h}, {"x", o.pose.x}, {"y", o.pose.y},
                  {"theta", o.pose.theta},
                  {"mat", o.mat == Material::Slippery ? "slippery" : "grippy"}});
  nlohmann::json jl = nlohmann::json::array();
  for (const auto& [a, b] : s.links) jl.push_back({a, b});
  return {{"objects", jo}, {"links", jl}, {"arm_q", s.arm_q}};
}

WorldState state_from_json(const nlohmann::json& j) {
  WorldState s;
  for (const auto& jo : j.at("objects")) {
    Object o;
    o.w = jo.at("w");
    o.h = jo.at("h");
    o.pose = {jo.at("x"), jo.at("y"), jo.at("theta")};
    o.mat = jo.at("mat") == "slippery" ? Material::Slippery : Material::Grippy;
    s.objects.push_back(o);
  }
  for (const auto& jl : j.at("links"))
    s.links.insert(std::make_pair(jl.at(0).get<int>(), jl.at(1).get<int>()));
  const auto q = j.at("arm_q").get<std::vector<double>>();
  s.arm_q = {q[0], q[1], q[2]};
  return s;
}

nlohmann::json macro_to_json(const MacroAction& m) {
  static const char* names[] = {"pickplace", "add_constraint", "remove_constraint"};
  return {{"kind", names[static_cast<int>(m.kind)]}, {"target", m.target},
          {"x", m.goal.x}, {"y", m.goal.y}, {"theta", m.goal.theta},
          {"a", m.a}, {"b", m.b}};
}

MacroAction macro_from_json(const nlohmann::json& j) {
  MacroAction m;
  const std::string kind = j.at("kind");
  if (kind == "pickplace") m.kind = MacroAction::Kind::PickPlace;
  else if (kind == "add_constraint") m.kind = MacroAction::Kind::AddConstraint;
  else if (kind == "remove_constraint") m.kind = MacroAction::Kind::RemoveConstraint;
  else throw std::invalid_argument("unknown macro kind: " + kind);
  m.target = j.at("target");
  m.goal = {j.at("x"), j.at("y"), j.at("theta")};
  m.a = j.at("a");
  m.b = j.at("b");
  return m;
}

nlohmann::json TaskSpec::to_json() const {
  return {{"task", name}, {"seed", placement_seed}};
}

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  return by_name(j.at("task"), j.value("seed", 0ull));
}

}  // namespace csp::sim
