#include "ricl/pipeline/dataset.hpp"

#include "ricl/sim/expert.hpp"
#include "ricl/sim/tasks.hpp"

namespace ricl::pipeline {

DemoSet generate_demo_set(const std::vector<sim::TaskSpec>& tasks, int per_task,
                          uint64_t base_seed, const RunConfig& cfg) {
  DemoSet out;
  require(per_task >= 1 && per_task < 100, "config-invalid", "per_task must be in [1, 99]");
  const auto suite = sim::full_suite();
  for (const auto& task : tasks) {
    int suite_pos = -1;
    for (size_t i = 0; i < suite.size(); ++i)
      if (suite[i].task_id == task.task_id) suite_pos = int(i);
    require(suite_pos >= 0, "unknown-task", task.task_id);
    TaskDemos td;
    td.spec = task;
    sim::Env env(task, cfg.env);
    for (int j = 0; j < per_task; ++j) {
      int demo_id = suite_pos * 100 + j;
      uint64_t seed = Rng::substream(base_seed, uint64_t(demo_id));
      td.demos.push_back(sim::generate_demo(env, seed, demo_id, cfg.codec.bins_per_dim));
    }
    out.push_back(std::move(td));
  }
  return out;
}

PrimingDataset build_priming_dataset(const DemoSet& demos, const io::PolicyBundle& bundle, int k) {
  PrimingDataset ds;
  for (const auto& td : demos) {
    require(td.demos.size() >= 2, "insufficient-demos",
            td.spec.task_id + " has " + std::to_string(td.demos.size()) +
                " demos; leave-one-demo-out needs at least 2");
    PrimingDataset::TaskBlock block;
    block.spec = td.spec;
    std::vector<const sim::Demonstration*> ptrs;
    for (const auto& d : td.demos) ptrs.push_back(&d);
    block.index = std::make_unique<retrieval::Index>(
        retrieval::Index::build(ptrs, {td.spec}, *bundle.embedder, *bundle.codec));
    ds.tasks.push_back(std::move(block));
  }

  for (size_t t = 0; t < ds.tasks.size(); ++t) {
    const auto& index = *ds.tasks[t].index;
    for (int e = 0; e < index.size(); ++e) {
      const auto& entry = index.entry(e);
      auto res = index.query(index.embedding(e), k, entry.demo_id);
      PrimingItem item;
      item.task_idx = int(t);
      item.query_entry = e;
      item.demo_id = entry.demo_id;
      item.step = entry.step_index;
      for (const auto& n : res.neighbors) {
        item.neighbor_entries.push_back(n.entry);
        item.distances.push_back(n.distance);
      }
      item.padded = res.padded;
      ds.items.push_back(std::move(item));
    }
  }
  ds.config_hash = bundle.cfg.hash();
  return ds;
}

namespace {

policy::NeighborGroup neighbor_from_entry(const retrieval::Index& index, int entry, float dist) {
  const auto& e = index.entry(entry);
  policy::NeighborGroup g;
  g.image_tokens = &index.image_tokens(entry);
  g.prompt_ids = &index.task(e.task_idx).prompt_ids;
  g.proprio = e.proprio;
  g.action_ids = &e.action_ids;
  g.distance_to_query = dist;
  g.demo_id = e.demo_id;
  g.step_index = e.step_index;
  return g;
}

}  // namespace

policy::ContextSequence make_priming_context(const PrimingDataset& ds, const PrimingItem& item,
                                             const io::PolicyBundle& bundle) {
  const auto& index = *ds.tasks[size_t(item.task_idx)].index;
  std::vector<policy::NeighborGroup> neighbors;
  for (size_t i = 0; i < item.neighbor_entries.size(); ++i)
    neighbors.push_back(
        neighbor_from_entry(index, item.neighbor_entries[i], item.distances[i]));

  const auto& qe = index.entry(item.query_entry);
  policy::QueryGroup query;
  query.image_tokens = index.image_tokens(item.query_entry);
  query.prompt_ids = index.task(qe.task_idx).prompt_ids;
  query.proprio = qe.proprio;
  query.target_action_ids = qe.action_ids;

  policy::AssembleConfig acfg;
  acfg.k = int(neighbors.size());
  acfg.width = bundle.mcfg.width;
  acfg.context_length = bundle.mcfg.context_length;
  acfg.query_group = bundle.cfg.retrieval.k;
  return policy::assemble_context(neighbors, query, *bundle.codec, acfg);
}

policy::ContextSequence make_query_context(const retrieval::Index& index, int entry,
                                           const io::PolicyBundle& bundle) {
  const auto& qe = index.entry(entry);
  policy::QueryGroup query;
  query.image_tokens = index.image_tokens(entry);
  query.prompt_ids = index.task(qe.task_idx).prompt_ids;
  query.proprio = qe.proprio;
  query.target_action_ids = qe.action_ids;

  policy::AssembleConfig acfg;
  acfg.k = 0;
  acfg.width = bundle.mcfg.width;
  acfg.context_length = bundle.mcfg.context_length;
  acfg.query_group = bundle.cfg.retrieval.k;
  return policy::assemble_context({}, query, *bundle.codec, acfg);
}

}  // namespace ricl::pipeline
