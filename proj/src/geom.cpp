#include "csp/geom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "csp/util.hpp"

namespace csp::geom {

namespace {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

double joint_dist(const Joints& a, const Joints& b) {
  const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

Joints lerp(const Joints& a, const Joints& b, double t) {
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

}  // namespace

bool ArmModel::within_bounds(const Joints& q) const {
  for (int i = 0; i < 3; ++i)
    if (q[i] < bounds[i].first || q[i] > bounds[i].second) return false;
  return true;
}

Pose forward_kinematics(const ArmModel& arm, const Joints& q) {
  double a = 0.0, x = arm.base_x, y = arm.base_y;
  for (int i = 0; i < 3; ++i) {
    a += q[i];
    x += arm.link_len[i] * std::cos(a);
    y += arm.link_len[i] * std::sin(a);
  }
  return {x, y, wrap_angle(a)};
}

std::array<std::pair<double, double>, 4> arm_points(const ArmModel& arm, const Joints& q) {
  std::array<std::pair<double, double>, 4> pts;
  double a = 0.0, x = arm.base_x, y = arm.base_y;
  pts[0] = {x, y};
  for (int i = 0; i < 3; ++i) {
    a += q[i];
    x += arm.link_len[i] * std::cos(a);
    y += arm.link_len[i] * std::sin(a);
    pts[i + 1] = {x, y};
  }
  return pts;
}

bool point_in_box(double px, double py, const Box& box) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double dx = px - box.cx, dy = py - box.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= box.w * 0.5 && std::abs(ly) <= box.h * 0.5;
}

bool segment_box_intersect(double ax, double ay, double bx, double by, const Box& box) {
  // Slab test in the box's local frame.
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double lax = c * (ax - box.cx) + s * (ay - box.cy);
  const double lay = -s * (ax - box.cx) + c * (ay - box.cy);
  const double lbx = c * (bx - box.cx) + s * (by - box.cy);
  const double lby = -s * (bx - box.cx) + c * (by - box.cy);

  const double hw = box.w * 0.5, hh = box.h * 0.5;
  double tmin = 0.0, tmax = 1.0;
  const double d[2] = {lbx - lax, lby - lay};
  const double p[2] = {lax, lay};
  const double half[2] = {hw, hh};
  for (int i = 0; i < 2; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (p[i] < -half[i] || p[i] > half[i]) return false;
    } else {
      double t1 = (-half[i] - p[i]) / d[i];
      double t2 = (half[i] - p[i]) / d[i];
      if (t1 > t2) std::swap(t1, t2);
      tmin = std::max(tmin, t1);
      tmax = std::min(tmax, t2);
      if (tmin > tmax) return false;
    }
  }
  return true;
}

bool boxes_overlap(const Box& a, const Box& b, double tol) {
  // Separating-axis test over both boxes' axes; tol expands box a.
  const double axes[4][2] = {
      {std::cos(a.theta), std::sin(a.theta)},
      {-std::sin(a.theta), std::cos(a.theta)},
      {std::cos(b.theta), std::sin(b.theta)},
      {-std::sin(b.theta), std::cos(b.theta)},
  };
  const double ahw = a.w * 0.5 + tol, ahh = a.h * 0.5 + tol;
  const double bhw = b.w * 0.5, bhh = b.h * 0.5;
  const double ca = std::cos(a.theta), sa = std::sin(a.theta);
  const double cb = std::cos(b.theta), sb = std::sin(b.theta);
  for (const auto& ax : axes) {
    // Projection radius of each box on the axis.
    const double ra = ahw * std::abs(ax[0] * ca + ax[1] * sa) +
                      ahh * std::abs(-ax[0] * sa + ax[1] * ca);
    const double rb = bhw * std::abs(ax[0] * cb + ax[1] * sb) +
                      bhh * std::abs(-ax[0] * sb + ax[1] * cb);
    const double dist = std::abs(ax[0] * (b.cx - a.cx) + ax[1] * (b.cy - a.cy));
    if (dist > ra + rb) return false;
  }
  return true;
}

std::optional<Joints> ik_solve(const ArmModel& arm, const Pose& target,
                               bool constrain_orientation, uint64_t seed,
                               const IkParams& params) {
  if (!std::isfinite(target.x) || !std::isfinite(target.y) || !std::isfinite(target.theta))
    throw std::invalid_argument("ik_solve: non-finite target");

  const double dx = target.x - arm.base_x, dy = target.y - arm.base_y;
  if (std::sqrt(dx * dx + dy * dy) > arm.reach() + params.pos_tol) return std::nullopt;

  std::mt19937_64 rng(mix_seed(seed));

  for (int restart = 0; restart < params.restarts; ++restart) {
    Joints q;
    if (restart == 0) {
      // Warm start pointing at the target, jittered by the seed so repeated
      // calls with different seeds explore different arm configurations.
      const double base_angle = std::atan2(dy, dx);
      std::uniform_real_distribution<double> jit(-0.5, 0.5);
      const double elbow = (rng() & 1) ? 1.0 : -1.0;
      q = {std::clamp(base_angle + jit(rng), arm.bounds[0].first, arm.bounds[0].second),
           std::clamp(elbow * (0.3 + std::abs(jit(rng))), arm.bounds[1].first,
                      arm.bounds[1].second),
           std::clamp(-elbow * (0.3 + std::abs(jit(rng))), arm.bounds[2].first,
                      arm.bounds[2].second)};
    } else {
      for (int i = 0; i < 3; ++i) {
        std::uniform_real_distribution<double> dist(arm.bounds[i].first, arm.bounds[i].second);
        q[i] = dist(rng);
      }
    }

    const double lambda2 = params.damping * params.damping;
    for (int it = 0; it < params.max_iters; ++it) {
      const auto pts = arm_points(arm, q);
      const double ex = target.x - pts[3].first;
      const double ey = target.y - pts[3].second;
      double etheta = 0.0;
      if (constrain_orientation) {
        const double cur = q[0] + q[1] + q[2];
        etheta = wrap_angle(target.theta - cur);
      }
      const double err = std::sqrt(ex * ex + ey * ey);
      if (err <= params.pos_tol && std::abs(etheta) <= params.ang_tol)
        return arm.within_bounds(q) ? std::optional<Joints>(q) : std::nullopt;

      // Jacobian columns: d(ee)/d(q_i).
      double jx[3], jy[3];
      for (int i = 0; i < 3; ++i) {
        jx[i] = -(pts[3].second - pts[i].second);
        jy[i] = pts[3].first - pts[i].first;
      }

      Joints dq{0, 0, 0};
      if (constrain_orientation) {
        // J is 3x3 with last row all ones; solve (J J^T + l I) z = e, dq = J^T z.
        double A[3][3];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) A[r][c] = 0.0;
        for (int i = 0; i < 3; ++i) {
          A[0][0] += jx[i] * jx[i];
          A[0][1] += jx[i] * jy[i];
          A[0][2] += jx[i];
          A[1][1] += jy[i] * jy[i];
          A[1][2] += jy[i];
          A[2][2] += 1.0;
        }
        A[1][0] = A[0][1];
        A[2][0] = A[0][2];
        A[2][1] = A[1][2];
        for (int i = 0; i < 3; ++i) A[i][i] += lambda2;
        // Solve 3x3 via Cramer (well-conditioned thanks to damping).
        const double det = A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1]) -
                           A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0]) +
                           A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0]);
        const double e[3] = {ex, ey, etheta};
        double z[3];
        for (int col = 0; col < 3; ++col) {
          double M[3][3];
          for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) M[r][c] = (c == col) ? e[r] : A[r][c];
          const double dnum = M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                              M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                              M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
          z[col] = dnum / det;
        }
        for (int i = 0; i < 3; ++i) dq[i] = jx[i] * z[0] + jy[i] * z[1] + z[2];
      } else {
        // 2x3 Jacobian; A = J J^T + l I is 2x2.
        double a00 = lambda2, a01 = 0.0, a11 = lambda2;
        for (int i = 0; i < 3; ++i) {
          a00 += jx[i] * jx[i];
          a01 += jx[i] * jy[i];
          a11 += jy[i] * jy[i];
        }
        const double det = a00 * a11 - a01 * a01;
        const double z0 = (ex * a11 - ey * a01) / det;
        const double z1 = (ey * a00 - ex * a01) / det;
        for (int i = 0; i < 3; ++i) dq[i] = jx[i] * z0 + jy[i] * z1;
      }

      for (int i = 0; i < 3; ++i)
        q[i] = std::clamp(q[i] + dq[i], arm.bounds[i].first, arm.bounds[i].second);
    }
  }
  return std::nullopt;
}

bool collision_check(const ArmModel& arm, const Joints& q, std::span<const Box> obstacles,
                     const std::optional<HeldObject>& held) {
  const auto pts = arm_points(arm, q);
  for (const Box& b : obstacles) {
    for (int i = 0; i < 3; ++i) {
      if (segment_box_intersect(pts[i].first, pts[i].second, pts[i + 1].first,
                                pts[i + 1].second, b))
        return true;
    }
  }
  if (held) {
    const double ee_theta = q[0] + q[1] + q[2];
    const double c = std::cos(ee_theta), s = std::sin(ee_theta);
    Box hb;
    hb.cx = pts[3].first + c * held->off_x - s * held->off_y;
    hb.cy = pts[3].second + s * held->off_x + c * held->off_y;
    hb.w = held->w;
    hb.h = held->h;
    hb.theta = ee_theta + held->off_theta;
    for (const Box& b : obstacles)
      if (boxes_overlap(hb, b)) return true;
  }
  return false;
}

bool edge_collision_free(const ArmModel& arm, const Joints& a, const Joints& b,
                         std::span<const Box> obstacles, const std::optional<HeldObject>& held,
                         double resolution) {
  double max_d = 0.0;
  for (int i = 0; i < 3; ++i) max_d = std::max(max_d, std::abs(a[i] - b[i]));
  const int steps = std::max(1, static_cast<int>(std::ceil(max_d / resolution)));
  for (int k = 0; k <= steps; ++k) {
    const Joints q = lerp(a, b, static_cast<double>(k) / steps);
    if (collision_check(arm, q, obstacles, held)) return false;
  }
  return true;
}

namespace {

struct RrtTree {
  std::vector<Joints> nodes;
  std::vector<int> parent;

  int nearest(const Joints& q) const {
    int best = 0;
    double bd = joint_dist(nodes[0], q);
    for (size_t i = 1; i < nodes.size(); ++i) {
      const double d = joint_dist(nodes[i], q);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  int add(const Joints& q, int par) {
    nodes.push_back(q);
    parent.push_back(par);
    return static_cast<int>(nodes.size()) - 1;
  }

  std::vector<Joints> path_to_root(int idx) const {
    std::vector<Joints> out;
    for (int i = idx; i >= 0; i = parent[i]) out.push_back(nodes[i]);
    return out;
  }
};

}  // namespace

std::optional<JointPath> rrt_connect(const ArmModel& arm, const Joints& q_start,
                                     const Joints& q_goal, std::span<const Box> obstacles,
                                     const std::optional<HeldObject>& held, uint64_t seed,
                                     const RrtParams& params) {
  if (!arm.within_bounds(q_start) || !arm.within_bounds(q_goal))
    throw std::invalid_argument("rrt_connect: endpoint outside joint bounds");
  if (collision_check(arm, q_start, obstacles, held) ||
      collision_check(arm, q_goal, obstacles, held))
    throw std::invalid_argument("rrt_connect: endpoint in collision");

  // Edges are validated at half the declared resolution so an independent
  // recheck at that spacing revisits exactly the same sample lattice.
  const double check_res = 0.5 * params.resolution;

  // Direct segment covers the common uncluttered case.
  if (edge_collision_free(arm, q_start, q_goal, obstacles, held, check_res))
    return JointPath{{q_start, q_goal}};

  std::mt19937_64 rng(mix_seed(seed));
  std::array<std::uniform_real_distribution<double>, 3> dists{
      std::uniform_real_distribution<double>(arm.bounds[0].first, arm.bounds[0].second),
      std::uniform_real_distribution<double>(arm.bounds[1].first, arm.bounds[1].second),
      std::uniform_real_distribution<double>(arm.bounds[2].first, arm.bounds[2].second)};

  RrtTree ta, tb;
  ta.add(q_start, -1);
  tb.add(q_goal, -1);
  bool a_is_start = true;

  auto extend = [&](RrtTree& t, const Joints& target) -> int {
    const int near = t.nearest(target);
    const Joints& qn = t.nodes[near];
    const double d = joint_dist(qn, target);
    Joints qnew = d <= params.step ? target : lerp(qn, target, params.step / d);
    if (!arm.within_bounds(qnew)) return -1;
    if (!edge_collision_free(arm, qn, qnew, obstacles, held, check_res)) return -1;
    return t.add(qnew, near);
  };

  for (int it = 0; it < params.max_samples; ++it) {
    Joints sample{dists[0](rng), dists[1](rng), dists[2](rng)};
    const int na = extend(ta, sample);
    if (na >= 0) {
      // Attempt to connect the other tree to the new node.
      int nb = tb.nearest(ta.nodes[na]);
      while (true) {
        const double d = joint_dist(tb.nodes[nb], ta.nodes[na]);
        if (d <= params.step &&
            edge_collision_free(arm, tb.nodes[nb], ta.nodes[na], obstacles, held,
                                check_res)) {
          auto pa = ta.path_to_root(na);    // new node .. start(or goal)
          auto pb = tb.path_to_root(nb);    // near node .. other end
          std::reverse(pa.begin(), pa.end());
          pa.insert(pa.end(), pb.begin(), pb.end());
          if (!a_is_start) std::reverse(pa.begin(), pa.end());
          return JointPath{std::move(pa)};
        }
        const int next = extend(tb, ta.nodes[na]);
        if (next < 0) break;
        nb = next;
      }
    }
    std::swap(ta, tb);
    a_is_start = !a_is_start;
  }
  return std::nullopt;
}

}  // namespace csp::geom
