#include "ricl/sim/env.hpp"

#include <algorithm>
#include <cmath>

namespace ricl::sim {
namespace {

constexpr double kPi = 3.14159265358979323846;

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

bool region_contains(GoalKind goal, double x, double y, double margin = 0.0) {
  const double band = TableGeometry::region_band + margin;
  switch (goal) {
    case GoalKind::RegionLeft: return x <= band;
    case GoalKind::RegionRight: return x >= 1.0 - band;
    case GoalKind::RegionTop: return y >= 1.0 - band;
    case GoalKind::RegionBottom: return y <= band;
    case GoalKind::RegionCenter: {
      double r = TableGeometry::center_radius + margin;
      double dx = x - 0.5, dy = y - 0.5;
      return dx * dx + dy * dy <= r * r;
    }
    case GoalKind::InTray: {
      Rect t = TableGeometry::tray();
      return Rect{t.x0 - margin, t.y0 - margin, t.x1 + margin, t.y1 + margin}.contains(x, y);
    }
    case GoalKind::InBowl: {
      double r = TableGeometry::bowl_r + margin;
      double dx = x - TableGeometry::bowl_cx, dy = y - TableGeometry::bowl_cy;
      return dx * dx + dy * dy <= r * r;
    }
    case GoalKind::Lifted: return false;  // z-based, handled separately
  }
  return false;
}

// --- rendering -------------------------------------------------------------

struct Viewport {
  double x0, y0, span;  // world window [x0, x0+span] x [y0, y0+span]
};

struct Rgb {
  float r, g, b;
};

void blend(Image& img, int row, int col, const Rgb& c, float alpha) {
  if (alpha <= 0.f) return;
  float a = std::min(alpha, 1.f);
  img.at(row, col, 0) = img.at(row, col, 0) * (1.f - a) + c.r * a;
  img.at(row, col, 1) = img.at(row, col, 1) * (1.f - a) + c.g * a;
  img.at(row, col, 2) = img.at(row, col, 2) * (1.f - a) + c.b * a;
}

// equilateral triangle, point up, circumradius 1.3 * half (similar area to a square)
double triangle_sdf(double lx, double ly, double half) {
  const double r = 1.3 * half;  // circumradius
  // vertices of an equilateral triangle, point up
  const double ax = 0.0, ay = r;
  const double bx = -r * std::sqrt(3.0) / 2.0, by = -r * 0.5;
  const double cx2 = r * std::sqrt(3.0) / 2.0, cy2 = -r * 0.5;
  auto edge_dist = [&](double x0, double y0, double x1, double y1) {
    double ex = x1 - x0, ey = y1 - y0;
    double wx = lx - x0, wy = ly - y0;
    double t = clampd((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    double dx = wx - t * ex, dy = wy - t * ey;
    double d = std::sqrt(dx * dx + dy * dy);
    double cross = ex * wy - ey * wx;  // >0 = inside (ccw)
    return std::make_pair(d, cross);
  };
  auto [d0, c0] = edge_dist(ax, ay, bx, by);
  auto [d1, c1] = edge_dist(bx, by, cx2, cy2);
  auto [d2, c2] = edge_dist(cx2, cy2, ax, ay);
  double d = std::min({d0, d1, d2});
  bool inside = c0 > 0 && c1 > 0 && c2 > 0;
  return inside ? -d : d;
}

double object_sdf(const ObjectSpec& obj, double px, double py, const Eigen::Vector3d& pose) {
  double ct = std::cos(pose[2]), st = std::sin(pose[2]);
  double lx = ct * (px - pose[0]) + st * (py - pose[1]);
  double ly = -st * (px - pose[0]) + ct * (py - pose[1]);
  switch (obj.shape) {
    case Shape::Circle: return std::sqrt(lx * lx + ly * ly) - obj.half_size;
    case Shape::Square: {
      double qx = std::abs(lx) - obj.half_size, qy = std::abs(ly) - obj.half_size;
      double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
      return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
    }
    case Shape::Triangle: return triangle_sdf(lx, ly, obj.half_size);
  }
  return 1e9;
}

double rect_sdf(double px, double py, const Rect& r) {
  double qx = std::abs(px - r.cx()) - 0.5 * (r.x1 - r.x0);
  double qy = std::abs(py - r.cy()) - 0.5 * (r.y1 - r.y0);
  double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

Image render_scene(const TaskSpec& task, const EnvState& state, int size, const Viewport& vp) {
  Image img(size, size);
  const double px_per_unit = size / vp.span;
  const double aa = vp.span / size;  // ~1 pixel soft band in world units

  auto coverage = [&](double sd) { return float(clampd(0.5 - sd / aa, 0.0, 1.0)); };

  for (int row = 0; row < size; ++row) {
    double wy = vp.y0 + vp.span * (1.0 - (row + 0.5) / size);
    for (int col = 0; col < size; ++col) {
      double wx = vp.x0 + vp.span * ((col + 0.5) / size);

      // table background with a faint edge vignette
      float shade = (wx < 0.0 || wx > 1.0 || wy < 0.0 || wy > 1.0) ? 0.55f : 1.0f;
      img.at(row, col, 0) = 0.85f * shade;
      img.at(row, col, 1) = 0.82f * shade;
      img.at(row, col, 2) = 0.78f * shade;

      // goal containers (only when the task uses them)
      if (task.goal == GoalKind::InTray) {
        double sd = rect_sdf(wx, wy, TableGeometry::tray());
        blend(img, row, col, Rgb{0.62f, 0.47f, 0.30f}, coverage(sd));
        blend(img, row, col, Rgb{0.72f, 0.57f, 0.38f}, coverage(sd + 0.018));
      } else if (task.goal == GoalKind::InBowl) {
        double dx = wx - TableGeometry::bowl_cx, dy = wy - TableGeometry::bowl_cy;
        double sd = std::sqrt(dx * dx + dy * dy) - TableGeometry::bowl_r;
        blend(img, row, col, Rgb{0.45f, 0.45f, 0.52f}, coverage(sd));
        blend(img, row, col, Rgb{0.58f, 0.58f, 0.66f}, coverage(sd + 0.018));
      }

      // objects: distractors first, primary on top
      for (int i = task.object_count() - 1; i >= 0; --i) {
        const ObjectSpec& obj = task.object(i);
        double sd = object_sdf(obj, wx, wy, state.object_poses[size_t(i)]);
        blend(img, row, col, Rgb{obj.color.r, obj.color.g, obj.color.b}, coverage(sd));
      }

      // gripper: two fingers + crossbar; separation encodes aperture,
      // size and brightness encode height
      const double gx = state.gripper[0], gy = state.gripper[1], gz = state.gripper[2];
      double zf = gz / TableGeometry::z_max;
      double sep = 0.018 + 0.030 * state.aperture;
      double fh = 0.010 + 0.022 * zf;  // finger half-size
      float glow = float(0.10 + 0.45 * zf);
      Rgb gcol{glow, glow, 0.16f + 0.3f * glow};
      for (int f = -1; f <= 1; f += 2) {
        double qx = std::abs(wx - (gx + f * sep)) - fh;
        double qy = std::abs(wy - gy) - fh;
        double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
        double sd = std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
        blend(img, row, col, gcol, coverage(sd));
      }
      {
        double qx = std::abs(wx - gx) - sep;
        double qy = std::abs(wy - gy) - 0.006;
        double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
        double sd = std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
        blend(img, row, col, gcol, coverage(sd));
      }
    }
  }
  (void)px_per_unit;
  return img;
}

}  // namespace

Env::Env(TaskSpec task, RunConfig::Env cfg) : task_(std::move(task)), cfg_(cfg) {}

std::pair<EnvState, Observation> Env::reset(uint64_t seed) const {
  Rng rng(Rng::substream(seed, 0x5e7));
  EnvState state;
  state.object_poses.assign(size_t(task_.object_count()), Eigen::Vector3d::Zero());

  auto overlaps = [&](int idx, double x, double y) {
    for (int j = 0; j < idx; ++j) {
      double dx = x - state.object_poses[size_t(j)][0];
      double dy = y - state.object_poses[size_t(j)][1];
      double min_d = task_.object(idx).half_size + task_.object(j).half_size + 0.02;
      if (dx * dx + dy * dy < min_d * min_d) return true;
    }
    return false;
  };

  // primary: uniform over the task's randomization region, rejecting draws
  // that would start inside the goal region (the task would be trivially done)
  {
    const Rect& r = task_.randomization_region;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      double x = rng.uniform(r.x0, r.x1);
      double y = rng.uniform(r.y0, r.y1);
      if (region_contains(task_.goal, x, y, task_.primary.half_size + 0.02)) continue;
      if (!overlaps(0, x, y)) {
        state.object_poses[0] = Eigen::Vector3d(x, y, rng.uniform(0.0, 2.0 * kPi));
        placed = true;
      }
    }
    require(placed, "placement-infeasible", "primary object in task " + task_.task_id);
  }

  // distractors: nominal spots with seeded jitter
  static const double spots[][2] = {{0.15, 0.14}, {0.85, 0.14}, {0.15, 0.86}, {0.50, 0.14}};
  for (int i = 1; i < task_.object_count(); ++i) {
    const double* spot = spots[size_t(i - 1) % 4];
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      double x = clampd(spot[0] + rng.uniform(-0.015, 0.015), 0.07, 0.93);
      double y = clampd(spot[1] + rng.uniform(-0.015, 0.015), 0.07, 0.93);
      if (!overlaps(i, x, y)) {
        state.object_poses[size_t(i)] = Eigen::Vector3d(x, y, rng.uniform(0.0, 2.0 * kPi));
        placed = true;
      }
    }
    require(placed, "placement-infeasible",
            "distractor " + std::to_string(i) + " in task " + task_.task_id);
  }

  return {state, observe(state)};
}

Observation Env::observe(const EnvState& state) const {
  Observation obs;
  obs.top_image = render_top(state);
  if (cfg_.wrist_view) obs.wrist_image = render_wrist(state);
  obs.proprio = VecD(4);
  obs.proprio << state.gripper[0], state.gripper[1], state.gripper[2], state.aperture;
  obs.prompt = task_.prompt;
  return obs;
}

Image Env::render_top(const EnvState& state) const {
  return render_scene(task_, state, cfg_.image_size, Viewport{0.0, 0.0, 1.0});
}

Image Env::render_wrist(const EnvState& state) const {
  const double span = 0.40;
  Viewport vp{state.gripper[0] - span / 2, state.gripper[1] - span / 2, span};
  return render_scene(task_, state, cfg_.image_size, vp);
}

bool Env::goal_satisfied(const EnvState& state) const {
  const auto& p = state.object_poses[0];
  if (task_.goal == GoalKind::Lifted)
    return state.attached == 0 && state.gripper[2] >= TableGeometry::z_lifted;
  return region_contains(task_.goal, p[0], p[1]) && state.attached != 0;
}

bool Env::waypoint_satisfied(const EnvState& state, WaypointKind kind) const {
  const auto& p = state.object_poses[0];
  switch (kind) {
    case WaypointKind::Reached: {
      double dx = state.gripper[0] - p[0], dy = state.gripper[1] - p[1];
      return std::sqrt(dx * dx + dy * dy) <= TableGeometry::reach_radius &&
             state.gripper[2] <= 0.12;
    }
    case WaypointKind::Grasped: return state.attached == 0;
    case WaypointKind::AtGoal: return region_contains(task_.goal, p[0], p[1]);
    case WaypointKind::Completed:
      return region_contains(task_.goal, p[0], p[1]) && state.attached != 0;
    case WaypointKind::Lifted:
      return state.attached == 0 && state.gripper[2] >= TableGeometry::z_lifted;
  }
  return false;
}

Env::StepResult Env::step(const EnvState& state, const VecD& action) const {
  require(action.size() == cfg_.action_dim, "shape-mismatch",
          "action has " + std::to_string(action.size()) + " dims, expected " +
              std::to_string(cfg_.action_dim));
  StepResult res;
  res.state = state;
  EnvState& s = res.state;

  double vx = action[0], vy = action[1], vz = action[2], g = action[3];
  const double vm = cfg_.v_max;
  if (vx < -vm || vx > vm || vy < -vm || vy > vm || vz < -vm || vz > vm || g < 0.0 || g > 1.0)
    res.clamped = true;
  vx = clampd(vx, -vm, vm);
  vy = clampd(vy, -vm, vm);
  vz = clampd(vz, -vm, vm);
  g = clampd(g, 0.0, 1.0);

  s.gripper[0] = clampd(s.gripper[0] + vx, 0.0, 1.0);
  s.gripper[1] = clampd(s.gripper[1] + vy, 0.0, 1.0);
  s.gripper[2] = clampd(s.gripper[2] + vz, 0.0, TableGeometry::z_max);

  const double thr = cfg_.close_threshold;
  const double prev_aperture = s.aperture;
  s.aperture = g;

  if (s.attached >= 0) {
    s.object_poses[size_t(s.attached)][0] = s.gripper[0];
    s.object_poses[size_t(s.attached)][1] = s.gripper[1];
  }

  const bool closing = prev_aperture >= thr && g < thr;
  const bool opening = prev_aperture < thr && g >= thr;
  if (closing && s.attached < 0 && s.gripper[2] <= TableGeometry::z_grasp) {
    int best = -1;
    double best_d = cfg_.grasp_radius;
    for (int i = 0; i < task_.object_count(); ++i) {
      double dx = s.gripper[0] - s.object_poses[size_t(i)][0];
      double dy = s.gripper[1] - s.object_poses[size_t(i)][1];
      double d = std::sqrt(dx * dx + dy * dy);
      if (d <= best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best >= 0) {
      s.attached = best;  // snap-attach
      s.object_poses[size_t(best)][0] = s.gripper[0];
      s.object_poses[size_t(best)][1] = s.gripper[1];
    }
  } else if (opening && s.attached >= 0) {
    s.attached = -1;
  }

  s.step_count += 1;
  res.done = goal_satisfied(s) || s.step_count >= cfg_.max_steps;
  return res;
}

WaypointRecord check_waypoints(const std::vector<EnvState>& trajectory, const TaskSpec& task,
                               const RunConfig::Env& cfg) {
  require(!trajectory.empty(), "empty-trajectory", "check_waypoints needs at least one state");
  Env env(task, cfg);
  WaypointRecord rec;
  for (const auto& wp : task.waypoints) rec.names.push_back(wp.name);
  rec.reached.assign(task.waypoints.size(), false);
  size_t stage = 0;
  for (const auto& state : trajectory) {
    while (stage < task.waypoints.size() && env.waypoint_satisfied(state, task.waypoints[stage].kind)) {
      rec.reached[stage] = true;
      ++stage;
    }
    if (stage == task.waypoints.size()) break;
  }
  return rec;
}

}  // namespace ricl::sim
