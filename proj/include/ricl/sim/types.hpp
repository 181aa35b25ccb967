#pragma once

#include "ricl/common.hpp"
#include "ricl/config.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ricl::sim {

enum class Shape { Square, Circle, Triangle };

struct Color {
  std::string word;  // prompt word ("red")
  float r, g, b;
};

struct ObjectSpec {
  std::string name;  // "<color> <shape>", unique within a task
  Shape shape = Shape::Square;
  Color color;
  double half_size = 0.055;  // table units
};

enum class GoalKind {
  RegionLeft,
  RegionRight,
  RegionTop,
  RegionBottom,
  RegionCenter,
  InTray,
  InBowl,
  Lifted,
};

enum class WaypointKind { Reached, Grasped, AtGoal, Completed, Lifted };

struct Waypoint {
  WaypointKind kind;
  std::string name;
};

struct Rect {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
};

struct TaskSpec {
  std::string task_id;
  std::string prompt;
  ObjectSpec primary;
  std::vector<ObjectSpec> distractors;
  GoalKind goal = GoalKind::RegionLeft;
  bool drag = false;  // transport while touching the table (novel motion)
  std::vector<Waypoint> waypoints;
  Rect randomization_region{0.30, 0.30, 0.70, 0.70};
  bool heldout = false;

  int object_count() const { return 1 + int(distractors.size()); }
  const ObjectSpec& object(int i) const { return i == 0 ? primary : distractors[size_t(i) - 1]; }
};

struct EnvState {
  Eigen::Vector3d gripper{0.5, 0.12, 0.25};  // x, y, z
  double aperture = 1.0;                     // 0 = fully closed
  std::vector<Eigen::Vector3d> object_poses; // (x, y, theta), index 0 = primary
  int attached = -1;                         // object index, -1 = none
  int step_count = 0;
};

struct Observation {
  Image top_image;
  std::optional<Image> wrist_image;
  VecD proprio;  // x, y, z, aperture
  std::string prompt;
};

// H x D, rows are time steps.
using ActionChunk = MatD;

struct DemoStep {
  Observation obs;
  EnvState state;
  ActionChunk label;  // expert actions t..t+H-1, terminal rows repeat the last action
};

struct Demonstration {
  std::string task_id;
  int demo_id = 0;
  uint64_t seed = 0;
  std::vector<DemoStep> steps;      // pre-action snapshots s_0 .. s_{L-1}
  EnvState final_state;             // s_L
  Eigen::Vector3d initial_primary_pose{0, 0, 0};

  int length() const { return int(steps.size()); }

  // s_0 .. s_L
  std::vector<EnvState> all_states() const {
    std::vector<EnvState> out;
    out.reserve(steps.size() + 1);
    for (const auto& st : steps) out.push_back(st.state);
    out.push_back(final_state);
    return out;
  }
};

struct WaypointRecord {
  std::vector<std::string> names;
  std::vector<bool> reached;

  bool full_success() const { return !reached.empty() && reached.back(); }
  int depth() const {
    int d = 0;
    for (bool r : reached) { if (r) ++d; else break; }
    return d;
  }
};

// Fixed table geometry (table units: [0,1] x [0,1], z in [0, z_max]).
struct TableGeometry {
  static constexpr double z_max = 0.30;
  static constexpr double z_travel = 0.20;
  static constexpr double z_table = 0.02;
  static constexpr double z_grasp = 0.06;   // gripper must be this low to grasp
  static constexpr double z_lifted = 0.18;  // "lifted" waypoint threshold
  static constexpr double reach_radius = 0.07;
  static constexpr double region_band = 0.22;   // left/right/top/bottom goal bands
  static constexpr double center_radius = 0.10;
  static constexpr Rect tray() { return Rect{0.71, 0.70, 0.93, 0.86}; }
  static constexpr double bowl_cx = 0.18, bowl_cy = 0.80, bowl_r = 0.09;
};

}  // namespace ricl::sim
