#pragma once

#include "ricl/pipeline/evaluate.hpp"
#include "ricl/pipeline/train.hpp"
#include "ricl/policy/policy.hpp"
#include "ricl/sim/expert.hpp"
#include "ricl/sim/tasks.hpp"

#include <chrono>
#include <functional>
#include <string>

namespace acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Prints one pass/fail line per criterion and tracks the exit status.
class Runner {
 public:
  void run(int number, const std::string& name, const std::function<Outcome()>& fn);
  int exit_code() const { return failures_ == 0 ? 0 : 1; }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

// Artifact cache for the training-heavy criteria ($RICL_ACCEPT_DIR or
// ./acceptance_artifacts). Checkpoints are keyed by config hash, so edits to
// the configuration invalidate the cache naturally.
std::string artifact_dir();

ricl::pipeline::DemoSet priming_demos(const ricl::RunConfig& cfg, int per_task = 20);
ricl::pipeline::DemoSet heldout_demos(const ricl::RunConfig& cfg, int per_task = 20);

// Load the cached checkpoint if present, otherwise train and save it.
ricl::io::PolicyBundle cached_base(const ricl::RunConfig& cfg, const ricl::pipeline::DemoSet& demos,
                                   std::ostream* log);
ricl::io::PolicyBundle cached_ricl(const ricl::RunConfig& cfg, const ricl::io::PolicyBundle& base,
                                   const ricl::pipeline::DemoSet& demos, std::ostream* log);
ricl::io::PolicyBundle cached_finetune(const ricl::RunConfig& cfg,
                                       const ricl::io::PolicyBundle& parent,
                                       const ricl::pipeline::TaskDemos& target, bool vanilla,
                                       std::ostream* log);

double elapsed_s(std::chrono::steady_clock::time_point t0);

}  // namespace acceptance
