#pragma once

#include "ricl/io/checkpoint.hpp"
#include "ricl/policy/context.hpp"
#include "ricl/retrieval/index.hpp"
#include "ricl/sim/env.hpp"

#include <memory>

namespace ricl::pipeline {

struct TaskDemos {
  sim::TaskSpec spec;
  std::vector<sim::Demonstration> demos;
};
using DemoSet = std::vector<TaskDemos>;

// Scripted-expert demo collection; demo ids are globally unique
// (suite position * 100 + index) and each demo gets its own derived seed.
DemoSet generate_demo_set(const std::vector<sim::TaskSpec>& tasks, int per_task,
                          uint64_t base_seed, const RunConfig& cfg);

// One training item: a query step plus its leave-one-demo-out neighbors.
struct PrimingItem {
  int task_idx = 0;
  int query_entry = 0;  // entry of the query step in its task index
  int demo_id = 0;
  int step = 0;
  std::vector<int> neighbor_entries;  // ascending by distance
  std::vector<float> distances;
  bool padded = false;
};

struct PrimingDataset {
  struct TaskBlock {
    sim::TaskSpec spec;
    std::unique_ptr<retrieval::Index> index;  // over all demos of the task
  };
  std::vector<TaskBlock> tasks;
  std::vector<PrimingItem> items;
  uint64_t config_hash = 0;

  size_t size() const { return items.size(); }
};

// For each task, each demo, each step: embed the step's top image, query the
// task index with that demo excluded, keep the k nearest. Needs >= 2 demos
// per task or throws insufficient-demos.
PrimingDataset build_priming_dataset(const DemoSet& demos, const io::PolicyBundle& bundle, int k);

// Materializes the training context for one item (k neighbor groups + query
// with target). query_group pins the query's group embedding.
policy::ContextSequence make_priming_context(const PrimingDataset& ds, const PrimingItem& item,
                                             const io::PolicyBundle& bundle);

// Query-only training context (base pretraining / vanilla finetuning).
policy::ContextSequence make_query_context(const retrieval::Index& index, int entry,
                                           const io::PolicyBundle& bundle);

}  // namespace ricl::pipeline
