#pragma once

#include "ricl/sim/env.hpp"

namespace ricl::sim {

// Scripted reach -> grasp -> transport -> release expert with seeded waypoint
// jitter. The returned demonstration satisfies the task's final waypoint;
// otherwise throws expert-failed. Labels are H-step lookahead chunks of the
// executed actions, padded at the end by repeating the final action.
//
// snap_bins > 0 snaps every executed action onto the uniform bin-center grid
// the action codec decodes to, so recorded labels survive encode/decode
// exactly and a policy replaying them reproduces the trajectory bit for bit.
Demonstration generate_demo(const Env& env, uint64_t seed, int demo_id, int snap_bins = 128);

}  // namespace ricl::sim
