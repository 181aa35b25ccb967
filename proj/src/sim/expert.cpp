#include "ricl/sim/expert.hpp"

#include <cmath>

namespace ricl::sim {
namespace {

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

Eigen::Vector2d goal_point(const TaskSpec& task, Rng& rng) {
  double jx = rng.uniform(-0.025, 0.025), jy = rng.uniform(-0.025, 0.025);
  switch (task.goal) {
    case GoalKind::RegionLeft: return {0.11 + jx, 0.50 + jy};
    case GoalKind::RegionRight: return {0.89 + jx, 0.50 + jy};
    case GoalKind::RegionTop: return {0.50 + jx, 0.89 + jy};
    case GoalKind::RegionBottom: return {0.50 + jx, 0.11 + jy};
    case GoalKind::RegionCenter: return {0.50 + jx * 0.8, 0.50 + jy * 0.8};
    case GoalKind::InTray: {
      Rect t = TableGeometry::tray();
      return {t.cx() + jx * 0.8, t.cy() + jy * 0.8};
    }
    case GoalKind::InBowl: return {TableGeometry::bowl_cx + jx * 0.8, TableGeometry::bowl_cy + jy * 0.8};
    case GoalKind::Lifted: return {0, 0};  // unused
  }
  return {0.5, 0.5};
}

}  // namespace

Demonstration generate_demo(const Env& env, uint64_t seed, int demo_id, int snap_bins) {
  const TaskSpec& task = env.task();
  const auto& cfg = env.config();
  Rng rng(Rng::substream(seed, 0xE2));

  auto snap = [snap_bins](double v, double lo, double hi) {
    if (snap_bins <= 0) return v;
    double w = (hi - lo) / snap_bins;
    int bin = int(std::floor((std::min(std::max(v, lo), hi) - lo) / (hi - lo) * snap_bins));
    bin = std::min(std::max(bin, 0), snap_bins - 1);
    return lo + (bin + 0.5) * w;
  };

  auto [state, obs0] = env.reset(seed);

  Demonstration demo;
  demo.task_id = task.task_id;
  demo.demo_id = demo_id;
  demo.seed = seed;
  demo.initial_primary_pose = state.object_poses[0];

  const Eigen::Vector2d obj(state.object_poses[0][0], state.object_poses[0][1]);
  const Eigen::Vector2d coarse(clampd(obj[0] + rng.uniform(-0.03, 0.03), 0.05, 0.95),
                               clampd(obj[1] + rng.uniform(-0.03, 0.03), 0.05, 0.95));
  const Eigen::Vector2d target = goal_point(task, rng);
  const double z_low = TableGeometry::z_table + 0.005;
  const double z_carry = task.drag ? z_low : TableGeometry::z_travel;
  const double z_goal = task.goal == GoalKind::Lifted ? TableGeometry::z_lifted + 0.02 : z_carry;

  enum Phase { CoarseApproach, FineApproach, Descend, Close, Lift, Transport, Release };
  int phase = CoarseApproach;
  {
    double d0 = (Eigen::Vector2d(state.gripper[0], state.gripper[1]) - obj).norm();
    if (d0 < 0.15) phase = FineApproach;
  }

  std::vector<VecD> actions;
  std::vector<EnvState> states{state};
  bool done = false;

  while (!done) {
    require(int(actions.size()) < cfg.max_steps, "expert-failed",
            "plan exceeded max_steps on task " + task.task_id + " seed " + std::to_string(seed));

    const Eigen::Vector3d& g = state.gripper;
    VecD action = VecD::Zero(cfg.action_dim);
    double grip = 1.0;
    Eigen::Vector3d tgt = g;

    switch (phase) {
      case CoarseApproach:
        tgt = {coarse[0], coarse[1], TableGeometry::z_travel};
        if ((Eigen::Vector2d(g[0], g[1]) - coarse).norm() < 0.04) { phase = FineApproach; continue; }
        break;
      case FineApproach:
        tgt = {obj[0], obj[1], TableGeometry::z_travel};
        if ((Eigen::Vector2d(g[0], g[1]) - obj).norm() < 0.008) { phase = Descend; continue; }
        break;
      case Descend:
        tgt = {obj[0], obj[1], z_low};
        if (std::abs(g[2] - z_low) < 0.008) { phase = Close; continue; }
        break;
      case Close:
        grip = 0.0;
        phase = (task.goal == GoalKind::Lifted || !task.drag) ? Lift : Transport;
        break;
      case Lift:
        grip = 0.0;
        tgt = {g[0], g[1], z_goal};
        if (task.goal != GoalKind::Lifted && g[2] >= z_carry - 0.008) { phase = Transport; continue; }
        break;
      case Transport:
        grip = 0.0;
        tgt = {target[0], target[1], z_carry};
        if ((Eigen::Vector2d(g[0], g[1]) - target).norm() < 0.008) { phase = Release; continue; }
        break;
      case Release:
        grip = 1.0;
        break;
    }

    Eigen::Vector3d delta = tgt - g;
    for (int a = 0; a < 3; ++a) {
      double v = clampd(delta[a], -cfg.v_max, cfg.v_max);
      // waypoint jitter on the travel phases only; grasp-critical phases stay exact
      if (phase == CoarseApproach || phase == FineApproach || phase == Transport)
        v = clampd(v + rng.uniform(-0.05, 0.05) * cfg.v_max, -cfg.v_max, cfg.v_max);
      action[a] = snap(v, -cfg.v_max, cfg.v_max);
    }
    action[3] = snap(grip, 0.0, 1.0);

    auto res = env.step(state, action);
    DemoStep step;
    step.state = state;
    step.obs = env.observe(state);
    demo.steps.push_back(std::move(step));
    actions.push_back(action);
    state = res.state;
    states.push_back(state);
    done = res.done;
  }

  demo.final_state = state;

  // H-step lookahead labels with terminal padding
  const int H = cfg.horizon, D = cfg.action_dim, L = int(actions.size());
  for (int t = 0; t < L; ++t) {
    ActionChunk chunk(H, D);
    for (int j = 0; j < H; ++j) chunk.row(j) = actions[size_t(std::min(t + j, L - 1))].transpose();
    demo.steps[size_t(t)].label = std::move(chunk);
  }

  WaypointRecord rec = check_waypoints(demo.all_states(), task, cfg);
  require(rec.full_success(), "expert-failed",
          "final waypoint unsatisfied on task " + task.task_id + " seed " + std::to_string(seed));
  return demo;
}

}  // namespace ricl::sim
