#pragma once

#include "ricl/sim/types.hpp"

namespace ricl::sim {

// Deterministic 2.5D tabletop: gripper moves in (x, y, z), objects slide on the
// table plane, grasping snap-attaches within grasp_radius when the aperture
// crosses below close_threshold. A single instance is single-threaded; step()
// and observe() are pure functions of their inputs, so const instances are
// safe to share across rollout workers.
class Env {
 public:
  Env(TaskSpec task, RunConfig::Env cfg);

  std::pair<EnvState, Observation> reset(uint64_t seed) const;

  struct StepResult {
    EnvState state;
    bool done = false;
    bool clamped = false;  // some action component was out of range
  };
  // Action layout: (dx, dy, dz, gripper aperture target).
  StepResult step(const EnvState& state, const VecD& action) const;

  Observation observe(const EnvState& state) const;
  Image render_top(const EnvState& state) const;
  Image render_wrist(const EnvState& state) const;

  bool goal_satisfied(const EnvState& state) const;
  bool waypoint_satisfied(const EnvState& state, WaypointKind kind) const;

  const TaskSpec& task() const { return task_; }
  const RunConfig::Env& config() const { return cfg_; }

 private:
  TaskSpec task_;
  RunConfig::Env cfg_;
};

// Per-waypoint reached flags for a state trajectory. Waypoint i+1 only counts
// once waypoint i has been satisfied at an earlier or equal step, so the
// flags are monotone non-increasing by construction.
WaypointRecord check_waypoints(const std::vector<EnvState>& trajectory, const TaskSpec& task,
                               const RunConfig::Env& cfg);

}  // namespace ricl::sim
