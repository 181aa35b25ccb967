#include "ricl/sim/tasks.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace ricl::sim {
namespace {

const Color kRed{"red", 0.82f, 0.12f, 0.10f};
const Color kGreen{"green", 0.10f, 0.62f, 0.18f};
const Color kBlue{"blue", 0.12f, 0.25f, 0.80f};
const Color kYellow{"yellow", 0.90f, 0.78f, 0.08f};
const Color kPurple{"purple", 0.55f, 0.15f, 0.65f};

std::string shape_word(Shape s) {
  switch (s) {
    case Shape::Square: return "square";
    case Shape::Circle: return "circle";
    case Shape::Triangle: return "triangle";
  }
  return "?";
}

ObjectSpec make_object(const Color& c, Shape s, double half = 0.055) {
  ObjectSpec o;
  o.color = c;
  o.shape = s;
  o.half_size = half;
  o.name = c.word + " " + shape_word(s);
  return o;
}

struct Template {
  std::string tag;
  GoalKind goal;
  bool drag;
};

std::string make_prompt(const Template& t, const ObjectSpec& primary) {
  std::ostringstream os;
  if (t.tag == "tray" || t.tag == "bowl") {
    os << "put the " << primary.name << " in the " << t.tag;
  } else if (t.tag == "lift") {
    os << "lift the " << primary.name;
  } else if (t.drag) {
    os << "drag the " << primary.name << " to the " << t.tag;
  } else {
    os << "move the " << primary.name << " to the " << t.tag;
  }
  return os.str();
}

std::vector<Waypoint> make_waypoints(GoalKind goal) {
  if (goal == GoalKind::Lifted)
    return {{WaypointKind::Reached, "reached"},
            {WaypointKind::Grasped, "grasped"},
            {WaypointKind::Lifted, "lifted"}};
  return {{WaypointKind::Reached, "reached"},
          {WaypointKind::Grasped, "grasped"},
          {WaypointKind::AtGoal, "at-goal"},
          {WaypointKind::Completed, "completed"}};
}

TaskSpec make_task(const Template& t, const ObjectSpec& primary,
                   const std::vector<ObjectSpec>& distractors, bool heldout) {
  TaskSpec task;
  task.primary = primary;
  task.distractors = distractors;
  task.goal = t.goal;
  task.drag = t.drag;
  task.prompt = make_prompt(t, primary);
  task.waypoints = make_waypoints(t.goal);
  task.heldout = heldout;
  std::string verb = t.drag ? "drag" : (t.tag == "lift" ? "lift" : (t.goal == GoalKind::InTray || t.goal == GoalKind::InBowl ? "put" : "move"));
  std::string obj_id = primary.name;
  std::replace(obj_id.begin(), obj_id.end(), ' ', '-');
  task.task_id = verb + "-" + obj_id + (t.tag == "lift" ? "" : "-" + t.tag);
  return task;
}

}  // namespace

std::vector<TaskSpec> priming_suite() {
  const Template templates[] = {
      {"left", GoalKind::RegionLeft, false},   {"right", GoalKind::RegionRight, false},
      {"top", GoalKind::RegionTop, false},     {"bottom", GoalKind::RegionBottom, false},
      {"center", GoalKind::RegionCenter, false}, {"tray", GoalKind::InTray, false},
      {"bowl", GoalKind::InBowl, false},       {"lift", GoalKind::Lifted, false},
  };
  const ObjectSpec primaries[] = {make_object(kRed, Shape::Square),
                                  make_object(kBlue, Shape::Circle)};
  const std::vector<ObjectSpec> distractor_sets[] = {
      {make_object(kGreen, Shape::Circle), make_object(kYellow, Shape::Square)},
      {make_object(kPurple, Shape::Square), make_object(kGreen, Shape::Triangle)},
  };
  std::vector<TaskSpec> suite;
  for (const auto& t : templates)
    for (int v = 0; v < 2; ++v)
      suite.push_back(make_task(t, primaries[v], distractor_sets[v], false));
  return suite;
}

std::vector<TaskSpec> heldout_suite() {
  std::vector<TaskSpec> suite;
  // unseen primary (yellow triangle), seen goal
  suite.push_back(make_task({"left", GoalKind::RegionLeft, false},
                            make_object(kYellow, Shape::Triangle),
                            {make_object(kRed, Shape::Square), make_object(kBlue, Shape::Circle)},
                            true));
  // unseen primary/goal combination (green circle into the tray)
  suite.push_back(make_task({"tray", GoalKind::InTray, false}, make_object(kGreen, Shape::Circle),
                            {make_object(kBlue, Shape::Square), make_object(kRed, Shape::Circle)},
                            true));
  // unseen combination for the lift goal
  suite.push_back(make_task({"lift", GoalKind::Lifted, false}, make_object(kYellow, Shape::Square),
                            {make_object(kGreen, Shape::Square), make_object(kBlue, Shape::Circle)},
                            true));
  // novel motion: drag along the table to the right
  suite.push_back(make_task({"right", GoalKind::RegionRight, true}, make_object(kBlue, Shape::Square),
                            {make_object(kYellow, Shape::Circle), make_object(kRed, Shape::Square)},
                            true));
  return suite;
}

std::vector<TaskSpec> full_suite() {
  auto suite = priming_suite();
  auto held = heldout_suite();
  suite.insert(suite.end(), held.begin(), held.end());
  return suite;
}

const TaskSpec& find_task(const std::vector<TaskSpec>& suite, const std::string& task_id) {
  for (const auto& t : suite)
    if (t.task_id == task_id) return t;
  fail("unknown-task", task_id);
}

std::vector<std::string> prompt_lexicon() {
  std::set<std::string> words;
  for (const auto& task : full_suite()) {
    std::istringstream ss(task.prompt);
    std::string w;
    while (ss >> w) words.insert(w);
  }
  return {words.begin(), words.end()};
}

}  // namespace ricl::sim
