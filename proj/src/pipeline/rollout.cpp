#include "ricl/pipeline/rollout.hpp"

#include "ricl/policy/policy.hpp"

#include <cmath>

namespace ricl::pipeline {
namespace {

std::vector<policy::NeighborGroup> groups_from_query(const retrieval::Index& index,
                                                     const retrieval::QueryResult& res) {
  std::vector<policy::NeighborGroup> groups;
  groups.reserve(res.neighbors.size());
  for (const auto& n : res.neighbors) {
    const auto& e = index.entry(n.entry);
    policy::NeighborGroup g;
    g.image_tokens = &index.image_tokens(n.entry);
    g.prompt_ids = &index.task(e.task_idx).prompt_ids;
    g.proprio = e.proprio;
    g.action_ids = &e.action_ids;
    g.distance_to_query = n.distance;
    g.demo_id = e.demo_id;
    g.step_index = e.step_index;
    groups.push_back(std::move(g));
  }
  return groups;
}

// Logging hook for rollouts that diverge from everything in the buffer:
// mean over executed gripper positions of the distance to the closest
// buffered proprio state of the closest demo.
double path_divergence(const std::vector<sim::EnvState>& states, const retrieval::Index& buffer) {
  std::map<int, std::vector<Eigen::Vector2d>> demo_paths;
  for (int i = 0; i < buffer.size(); ++i) {
    const auto& e = buffer.entry(i);
    demo_paths[e.demo_id].push_back({e.proprio[0], e.proprio[1]});
  }
  double best = 1e9;
  for (const auto& [id, path] : demo_paths) {
    double total = 0;
    for (const auto& s : states) {
      double nearest = 1e9;
      for (const auto& p : path)
        nearest = std::min(nearest, (Eigen::Vector2d(s.gripper[0], s.gripper[1]) - p).norm());
      total += nearest;
    }
    best = std::min(best, total / double(states.size()));
  }
  return best;
}

}  // namespace

MatD retrieve_and_play(const retrieval::Index& buffer, const io::PolicyBundle& bundle,
                       const Image& top_image) {
  require(buffer.size() > 0, "empty-buffer", "retrieve_and_play needs a non-empty buffer");
  auto q = bundle.embedder->embed_top_image(top_image);
  auto res = buffer.query(q.vector, 1);
  return bundle.codec->decode_chunk(buffer.entry(res.neighbors[0].entry).action_ids);
}

RolloutResult rollout(const sim::Env& env, const RolloutPolicy& policy, uint64_t seed) {
  require(policy.bundle != nullptr, "missing-policy", "rollout needs a policy bundle");
  require(policy.kind == MethodKind::Base || policy.buffer != nullptr, "empty-buffer",
          "retrieval methods need a buffer");
  const io::PolicyBundle& bundle = *policy.bundle;
  const auto& cfg = bundle.cfg;
  const int H = cfg.env.horizon;
  const int grip_col = cfg.env.action_dim - 1;

  auto [state, obs] = env.reset(seed);
  RolloutResult out;
  out.states.push_back(state);

  std::vector<int> prompt_ids = bundle.codec->encode_prompt(env.task().prompt);
  bool grip_mode = false;
  bool done = false;

  while (!done && state.step_count < cfg.env.max_steps) {
    MatD chunk;
    float d = 0.f;

    if (policy.kind == MethodKind::RetrieveAndPlay) {
      auto q = bundle.embedder->embed_top_image(obs.top_image);
      auto res = policy.buffer->query(q.vector, 1);
      d = res.neighbors[0].distance;
      chunk = bundle.codec->decode_chunk(policy.buffer->entry(res.neighbors[0].entry).action_ids);
    } else {
      policy::QueryGroup query;
      query.image_tokens = bundle.embedder->image_to_tokens(obs.top_image);
      if (obs.wrist_image) query.wrist_tokens = bundle.embedder->image_to_tokens(*obs.wrist_image);
      query.prompt_ids = prompt_ids;
      query.proprio = obs.proprio;

      policy::AssembleConfig acfg;
      acfg.width = bundle.mcfg.width;
      acfg.context_length = bundle.mcfg.context_length;
      acfg.query_group = cfg.retrieval.k;

      if (policy.kind == MethodKind::Base) {
        acfg.k = 0;
        auto ctx = policy::assemble_context({}, query, *bundle.codec, acfg);
        chunk = policy::predict_chunk(*bundle.model, ctx, *bundle.codec,
                                      policy::InterpolationParams{cfg.retrieval.lambda, 0.0},
                                      /*override_w=*/0.0)
                    .chunk;
      } else {
        auto q = bundle.embedder->embed_top_image(obs.top_image);
        auto res = policy.buffer->query(q.vector, cfg.retrieval.k);
        d = res.neighbors[0].distance;
        acfg.k = cfg.retrieval.k;
        auto ctx = policy::assemble_context(groups_from_query(*policy.buffer, res), query,
                                            *bundle.codec, acfg);
        chunk = policy::predict_chunk(*bundle.model, ctx, *bundle.codec,
                                      policy::InterpolationParams{cfg.retrieval.lambda, double(d)})
                    .chunk;
      }
    }

    // grip-switch rule: once a gripping action shows up in the last action of
    // a predicted chunk, execute post_grip_actions per inference from that
    // chunk on
    InferenceRecord rec;
    rec.d = d;
    rec.grip_fired = chunk(H - 1, grip_col) < cfg.env.close_threshold;
    if (rec.grip_fired) grip_mode = true;
    if (grip_mode)
      ++out.post_inferences;
    else
      ++out.pre_inferences;
    const int n_exec = grip_mode ? policy.exec.post_grip_actions : policy.exec.pre_grip_actions;

    for (int j = 0; j < n_exec && !done; ++j) {
      VecD action = chunk.row(j).transpose();
      auto res = env.step(state, action);
      state = res.state;
      out.states.push_back(state);
      out.actions.push_back(std::move(action));
      ++rec.executed;
      done = res.done;
    }
    out.inferences.push_back(rec);
    if (!done) obs = env.observe(state);
  }

  out.done = done;
  out.waypoints = sim::check_waypoints(out.states, env.task(), cfg.env);
  if (policy.buffer != nullptr && policy.buffer->size() > 0) {
    out.divergence = path_divergence(out.states, *policy.buffer);
    out.divergent = out.divergence > 0.15;
  }
  return out;
}

}  // namespace ricl::pipeline
