#pragma once

#include "ricl/pipeline/rollout.hpp"

#include <functional>

namespace ricl::pipeline {

// A method instance for an evaluation sweep. Buffers and (for per-task
// finetuned checkpoints) bundles are resolved per task id.
struct MethodEval {
  std::string name;
  MethodKind kind = MethodKind::Base;
  const io::PolicyBundle* bundle = nullptr;  // shared bundle, or null if bundle_for is set
  std::function<const io::PolicyBundle*(const std::string& task_id)> bundle_for;
  std::function<const retrieval::Index*(const std::string& task_id)> buffer_for;
  ExecPolicy exec;

  const io::PolicyBundle* resolve_bundle(const std::string& task_id) const {
    return bundle_for ? bundle_for(task_id) : bundle;
  }
};

struct EvalCell {
  std::string method;
  std::string task_id;
  int demo_count = -1;  // ablation label, -1 when not applicable
  std::vector<std::string> waypoint_names;
  std::vector<double> waypoint_rates;  // stacked: rate of reaching waypoint i
  double full_rate = 0.0;
  int n_total = 0;
  std::vector<double> per_seed_full;  // one entry per seed group
  int divergent_rollouts = 0;
  int failed_rollouts = 0;  // rollouts that raised an error (recorded, not fatal)
};

struct EvalReport {
  std::vector<EvalCell> cells;  // sorted by (method, task, demo_count)
  std::string config_hash;
  std::vector<uint64_t> seeds;
  int n_rollouts = 0;

  const EvalCell* find(const std::string& method, const std::string& task,
                       int demo_count = -1) const;
  // mean over tasks of the full-success rate / waypoint-1 rate for a method
  double aggregate_full(const std::string& method) const;
  double aggregate_waypoint(const std::string& method, size_t depth) const;

  void write_jsonl(const std::string& path) const;
  void write_tsv(const std::string& path) const;  // one column per waypoint depth
};

struct EvalRequest {
  std::vector<MethodEval> methods;
  std::vector<sim::TaskSpec> tasks;
  int n_rollouts = 20;
  std::vector<uint64_t> seeds = {101, 102, 103};
  int workers = 1;
  int demo_count_label = -1;
};

EvalReport evaluate(const EvalRequest& req, const RunConfig& cfg);

// Fig-5-style demo-count ablation: for each count c the buffer (and finetune
// set, for finetuned methods) is the first c demos of the task, fixed order.
struct AblateMethod {
  std::string name;
  MethodKind kind;
  const io::PolicyBundle* bundle;
  ExecPolicy exec;
};
EvalReport ablate_num_demos(const TaskDemos& task, const std::vector<int>& demo_counts,
                            const std::vector<AblateMethod>& methods, const RunConfig& cfg);

// No-loss-of-capabilities: RICL policy with a buffer of randomly chosen
// priming demos from unrelated tasks, evaluated on priming tasks against base.
EvalReport no_loss_test(const io::PolicyBundle& ricl, const io::PolicyBundle& base,
                        const DemoSet& priming_demos, const std::vector<std::string>& eval_tasks,
                        int buffer_demos, const RunConfig& cfg);

}  // namespace ricl::pipeline
