#include "ricl/pipeline/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

namespace ricl::pipeline {
namespace {

uint64_t rollout_seed(uint64_t seed_group, const std::string& task_id, int r) {
  return Rng::substream(seed_group ^ fnv1a64(task_id), 9000 + uint64_t(r));
}

std::string fmt_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

const EvalCell* EvalReport::find(const std::string& method, const std::string& task,
                                 int demo_count) const {
  for (const auto& c : cells)
    if (c.method == method && c.task_id == task && c.demo_count == demo_count) return &c;
  return nullptr;
}

double EvalReport::aggregate_full(const std::string& method) const {
  double total = 0;
  int n = 0;
  for (const auto& c : cells)
    if (c.method == method) {
      total += c.full_rate;
      ++n;
    }
  return n ? total / n : 0.0;
}

double EvalReport::aggregate_waypoint(const std::string& method, size_t depth) const {
  double total = 0;
  int n = 0;
  for (const auto& c : cells)
    if (c.method == method && depth < c.waypoint_rates.size()) {
      total += c.waypoint_rates[depth];
      ++n;
    }
  return n ? total / n : 0.0;
}

void EvalReport::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot write " + path);
  out << "{\"config_hash\":\"" << config_hash << "\",\"n_rollouts\":" << n_rollouts
      << ",\"seeds\":[";
  for (size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << "]}\n";
  for (const auto& c : cells) {
    out << "{\"method\":\"" << c.method << "\",\"task\":\"" << c.task_id << "\"";
    if (c.demo_count >= 0) out << ",\"demo_count\":" << c.demo_count;
    out << ",\"n\":" << c.n_total << ",\"full_success\":" << fmt_rate(c.full_rate)
        << ",\"waypoints\":{";
    for (size_t i = 0; i < c.waypoint_names.size(); ++i)
      out << (i ? "," : "") << "\"" << c.waypoint_names[i] << "\":" << fmt_rate(c.waypoint_rates[i]);
    out << "},\"per_seed_full\":[";
    for (size_t i = 0; i < c.per_seed_full.size(); ++i)
      out << (i ? "," : "") << fmt_rate(c.per_seed_full[i]);
    out << "],\"divergent\":" << c.divergent_rollouts << ",\"failed\":" << c.failed_rollouts
        << "}\n";
  }
  require(out.good(), "io-error", "write failed for " + path);
}

void EvalReport::write_tsv(const std::string& path) const {
  size_t max_depth = 0;
  for (const auto& c : cells) max_depth = std::max(max_depth, c.waypoint_names.size());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot write " + path);
  out << "method\ttask\tdemo_count\tn";
  for (size_t i = 0; i < max_depth; ++i) out << "\twaypoint" << (i + 1);
  out << "\tfull_success\n";
  for (const auto& c : cells) {
    out << c.method << "\t" << c.task_id << "\t" << c.demo_count << "\t" << c.n_total;
    for (size_t i = 0; i < max_depth; ++i)
      out << "\t" << (i < c.waypoint_rates.size() ? fmt_rate(c.waypoint_rates[i]) : "-");
    out << "\t" << fmt_rate(c.full_rate) << "\n";
  }
  require(out.good(), "io-error", "write failed for " + path);
}

EvalReport evaluate(const EvalRequest& req, const RunConfig& cfg) {
  struct Job {
    size_t method, task;
    size_t seed_idx;
    int r;
  };
  std::vector<Job> jobs;
  for (size_t m = 0; m < req.methods.size(); ++m)
    for (size_t t = 0; t < req.tasks.size(); ++t)
      for (size_t s = 0; s < req.seeds.size(); ++s)
        for (int r = 0; r < req.n_rollouts; ++r) jobs.push_back({m, t, s, r});

  struct Outcome {
    sim::WaypointRecord waypoints;
    bool divergent = false;
    bool failed = false;
  };
  std::vector<Outcome> outcomes(jobs.size());

  auto run_job = [&](const Job& job) {
    const MethodEval& method = req.methods[job.method];
    const sim::TaskSpec& task = req.tasks[job.task];
    Outcome& out = outcomes[&job - jobs.data()];
    try {
      RolloutPolicy policy;
      policy.kind = method.kind;
      policy.bundle = method.resolve_bundle(task.task_id);
      policy.buffer = method.buffer_for ? method.buffer_for(task.task_id) : nullptr;
      policy.exec = method.exec;
      sim::Env env(task, cfg.env);
      auto res = rollout(env, policy, rollout_seed(req.seeds[job.seed_idx], task.task_id, job.r));
      out.waypoints = res.waypoints;
      out.divergent = res.divergent;
    } catch (const std::exception& e) {
      // recorded as a failure; the sweep continues
      out.failed = true;
      out.waypoints.names.clear();
      out.waypoints.reached.clear();
      std::cerr << "rollout failed (" << method.name << ", " << task.task_id << "): " << e.what()
                << "\n";
    }
  };

  if (req.workers <= 1) {
    for (const auto& job : jobs) run_job(job);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) run_job(jobs[i]);
    };
    std::vector<std::thread> threads;
    for (int w = 0; w < req.workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  EvalReport report;
  report.config_hash = cfg.hash_hex();
  report.seeds = req.seeds;
  report.n_rollouts = req.n_rollouts;

  for (size_t m = 0; m < req.methods.size(); ++m) {
    for (size_t t = 0; t < req.tasks.size(); ++t) {
      EvalCell cell;
      cell.method = req.methods[m].name;
      cell.task_id = req.tasks[t].task_id;
      cell.demo_count = req.demo_count_label;
      for (const auto& wp : req.tasks[t].waypoints) cell.waypoint_names.push_back(wp.name);
      std::vector<int> reach_counts(cell.waypoint_names.size(), 0);
      std::vector<int> full_by_seed(req.seeds.size(), 0);
      for (size_t j = 0; j < jobs.size(); ++j) {
        const Job& job = jobs[j];
        if (job.method != m || job.task != t) continue;
        const Outcome& out = outcomes[j];
        ++cell.n_total;
        if (out.failed) {
          ++cell.failed_rollouts;
          continue;
        }
        for (size_t w = 0; w < out.waypoints.reached.size() && w < reach_counts.size(); ++w)
          if (out.waypoints.reached[w]) ++reach_counts[w];
        if (out.waypoints.full_success()) ++full_by_seed[job.seed_idx];
        if (out.divergent) ++cell.divergent_rollouts;
      }
      for (size_t w = 0; w < reach_counts.size(); ++w)
        cell.waypoint_rates.push_back(double(reach_counts[w]) / double(cell.n_total));
      cell.full_rate = cell.waypoint_rates.empty() ? 0.0 : cell.waypoint_rates.back();
      for (size_t s = 0; s < req.seeds.size(); ++s)
        cell.per_seed_full.push_back(double(full_by_seed[s]) / double(req.n_rollouts));
      report.cells.push_back(std::move(cell));
    }
  }
  std::sort(report.cells.begin(), report.cells.end(), [](const EvalCell& a, const EvalCell& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.task_id != b.task_id) return a.task_id < b.task_id;
    return a.demo_count < b.demo_count;
  });
  return report;
}

EvalReport ablate_num_demos(const TaskDemos& task, const std::vector<int>& demo_counts,
                            const std::vector<AblateMethod>& methods, const RunConfig& cfg) {
  require(!demo_counts.empty(), "config-invalid", "need at least one demo count");
  int max_count = *std::max_element(demo_counts.begin(), demo_counts.end());
  require(int(task.demos.size()) >= max_count, "insufficient-demos",
          "task has " + std::to_string(task.demos.size()) + " demos, ablation needs " +
              std::to_string(max_count));

  EvalReport merged;
  merged.config_hash = cfg.hash_hex();
  merged.seeds = cfg.eval.seeds;
  merged.n_rollouts = cfg.eval.n_rollouts;

  for (int count : demo_counts) {
    // fixed-order prefix of the demo list
    TaskDemos subset;
    subset.spec = task.spec;
    subset.demos.assign(task.demos.begin(), task.demos.begin() + count);
    std::vector<const sim::Demonstration*> ptrs;
    for (const auto& d : subset.demos) ptrs.push_back(&d);

    std::vector<MethodEval> evals;
    std::vector<std::unique_ptr<retrieval::Index>> buffers;
    for (const auto& m : methods) {
      retrieval::Index* buffer = nullptr;
      if (m.kind != MethodKind::Base) {
        buffers.push_back(std::make_unique<retrieval::Index>(retrieval::Index::build(
            ptrs, {task.spec}, *m.bundle->embedder, *m.bundle->codec)));
        buffer = buffers.back().get();
      }
      MethodEval e;
      e.name = m.name;
      e.kind = m.kind;
      e.bundle = m.bundle;
      e.exec = m.exec;
      e.buffer_for = [buffer](const std::string&) -> const retrieval::Index* { return buffer; };
      evals.push_back(std::move(e));
    }

    EvalRequest req;
    req.methods = std::move(evals);
    req.tasks = {task.spec};
    req.n_rollouts = cfg.eval.n_rollouts;
    req.seeds = cfg.eval.seeds;
    req.workers = cfg.eval.workers;
    req.demo_count_label = count;
    EvalReport part = evaluate(req, cfg);
    for (auto& c : part.cells) merged.cells.push_back(std::move(c));
  }
  std::sort(merged.cells.begin(), merged.cells.end(), [](const EvalCell& a, const EvalCell& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.task_id != b.task_id) return a.task_id < b.task_id;
    return a.demo_count < b.demo_count;
  });
  return merged;
}

EvalReport no_loss_test(const io::PolicyBundle& ricl, const io::PolicyBundle& base,
                        const DemoSet& priming_demos, const std::vector<std::string>& eval_tasks,
                        int buffer_demos, const RunConfig& cfg) {
  EvalReport merged;
  merged.config_hash = cfg.hash_hex();
  merged.seeds = cfg.eval.seeds;
  merged.n_rollouts = cfg.eval.n_rollouts;

  for (const auto& task_id : eval_tasks) {
    const TaskDemos* eval_td = nullptr;
    for (const auto& td : priming_demos)
      if (td.spec.task_id == task_id) eval_td = &td;
    require(eval_td != nullptr, "unknown-task", task_id);

    // randomly chosen priming demos from unrelated tasks only
    std::vector<std::pair<const sim::Demonstration*, const sim::TaskSpec*>> pool;
    for (const auto& td : priming_demos) {
      if (td.spec.task_id == task_id) continue;
      for (const auto& d : td.demos) pool.push_back({&d, &td.spec});
    }
    require(int(pool.size()) >= buffer_demos, "insufficient-demos", "random buffer pool too small");
    Rng rng(Rng::substream(cfg.training.seed, fnv1a64("no-loss:" + task_id)));
    for (size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[size_t(rng.uniform_int(int(i)))]);
    pool.resize(size_t(buffer_demos));

    std::vector<const sim::Demonstration*> ptrs;
    std::vector<sim::TaskSpec> specs;
    for (const auto& [d, spec] : pool) {
      ptrs.push_back(d);
      bool seen = false;
      for (const auto& s : specs) seen = seen || s.task_id == spec->task_id;
      if (!seen) specs.push_back(*spec);
    }
    auto buffer = std::make_shared<retrieval::Index>(
        retrieval::Index::build(ptrs, specs, *ricl.embedder, *ricl.codec));
    for (int i = 0; i < buffer->size(); ++i)
      require(buffer->task(buffer->entry(i).task_idx).task_id != task_id, "task-leak",
              "random buffer must be disjoint from the evaluated task");

    ExecPolicy exec{cfg.eval.pre_grip_actions, cfg.eval.post_grip_actions};
    MethodEval random_buffer;
    random_buffer.name = "ricl-random-buffer";
    random_buffer.kind = MethodKind::RiclRag;
    random_buffer.bundle = &ricl;
    random_buffer.exec = exec;
    random_buffer.buffer_for = [buffer](const std::string&) -> const retrieval::Index* {
      return buffer.get();
    };
    MethodEval base_eval;
    base_eval.name = "base";
    base_eval.kind = MethodKind::Base;
    base_eval.bundle = &base;
    base_eval.exec = exec;

    EvalRequest req;
    req.methods = {random_buffer, base_eval};
    req.tasks = {eval_td->spec};
    req.n_rollouts = cfg.eval.n_rollouts;
    req.seeds = cfg.eval.seeds;
    req.workers = cfg.eval.workers;
    EvalReport part = evaluate(req, cfg);
    for (auto& c : part.cells) merged.cells.push_back(std::move(c));
  }
  std::sort(merged.cells.begin(), merged.cells.end(), [](const EvalCell& a, const EvalCell& b) {
    if (a.method != b.method) return a.method < b.method;
    return a.task_id < b.task_id;
  });
  return merged;
}

}  // namespace ricl::pipeline
