#pragma once

#include "ricl/pipeline/dataset.hpp"

namespace ricl::pipeline {

// Deployment chunk-execution profile: pre-grip actions per inference until a
// gripping action is predicted in the last action of a chunk, post-grip
// actions per inference from that chunk on.
struct ExecPolicy {
  int pre_grip_actions = 3;
  int post_grip_actions = 8;
};

enum class MethodKind { Base, RiclRag, RetrieveAndPlay };

struct RolloutPolicy {
  MethodKind kind = MethodKind::Base;
  const io::PolicyBundle* bundle = nullptr;    // embedder + codec (+ model)
  const retrieval::Index* buffer = nullptr;    // null for Base
  ExecPolicy exec;
};

struct InferenceRecord {
  int executed = 0;
  bool grip_fired = false;
  float d = 0.f;  // nearest-neighbor distance at this inference (retrieval modes)
};

struct RolloutResult {
  std::vector<sim::EnvState> states;  // s_0 .. s_T
  std::vector<VecD> actions;
  std::vector<InferenceRecord> inferences;
  sim::WaypointRecord waypoints;
  int pre_inferences = 0;
  int post_inferences = 0;
  bool done = false;
  double divergence = 0.0;  // executed path vs closest buffer demo path
  bool divergent = false;   // qualitative "latent actions" logging hook
};

RolloutResult rollout(const sim::Env& env, const RolloutPolicy& policy, uint64_t seed);

// 1-NN baseline: decode of the rank-1 neighbor's action tokens.
MatD retrieve_and_play(const retrieval::Index& buffer, const io::PolicyBundle& bundle,
                       const Image& top_image);

}  // namespace ricl::pipeline
