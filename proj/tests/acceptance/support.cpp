#include "support.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace acceptance {

using namespace ricl;
namespace fs = std::filesystem;

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void Runner::run(int number, const std::string& name, const std::function<Outcome()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  Outcome outcome;
  try {
    outcome = fn();
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail = std::string("exception: ") + e.what();
  }
  if (!outcome.pass) ++failures_;
  std::printf("[%s] criterion %2d: %s%s%s  (%.1f s)\n", outcome.pass ? "PASS" : "FAIL", number,
              name.c_str(), outcome.detail.empty() ? "" : " -- ", outcome.detail.c_str(),
              elapsed_s(t0));
  std::fflush(stdout);
}

std::string artifact_dir() {
  std::string dir = "acceptance_artifacts";
  if (const char* env = std::getenv("RICL_ACCEPT_DIR")) dir = env;
  fs::create_directories(dir);
  return dir;
}

pipeline::DemoSet priming_demos(const RunConfig& cfg, int per_task) {
  return pipeline::generate_demo_set(sim::priming_suite(), per_task, cfg.training.seed, cfg);
}

pipeline::DemoSet heldout_demos(const RunConfig& cfg, int per_task) {
  return pipeline::generate_demo_set(sim::heldout_suite(), per_task,
                                     Rng::substream(cfg.training.seed, 0x4E1D), cfg);
}

io::PolicyBundle cached_base(const RunConfig& cfg, const pipeline::DemoSet& demos,
                             std::ostream* log) {
  std::string path = artifact_dir() + "/base_" + cfg.hash_hex() + ".ckpt";
  if (fs::exists(path)) return io::load_checkpoint(path);
  auto bundle = pipeline::pretrain_base(demos, cfg, log);
  io::save_checkpoint(bundle, path);
  return bundle;
}

io::PolicyBundle cached_ricl(const RunConfig& cfg, const io::PolicyBundle& base,
                             const pipeline::DemoSet& demos, std::ostream* log) {
  std::string base_path = artifact_dir() + "/base_" + cfg.hash_hex() + ".ckpt";
  std::string path = artifact_dir() + "/ricl_" + cfg.hash_hex() + ".ckpt";
  if (fs::exists(path)) return io::load_checkpoint(path);
  auto dataset = pipeline::build_priming_dataset(demos, base, cfg.retrieval.k);
  std::string parent = fs::exists(base_path) ? hex64(io::file_hash(base_path)) : "";
  auto bundle = pipeline::prime(base, dataset, cfg, parent, log);
  io::save_checkpoint(bundle, path);
  return bundle;
}

io::PolicyBundle cached_finetune(const RunConfig& cfg, const io::PolicyBundle& parent,
                                 const pipeline::TaskDemos& target, bool vanilla,
                                 std::ostream* log) {
  std::string path = artifact_dir() + "/" + (vanilla ? "baseft_" : "riclft_") +
                     target.spec.task_id + "_" + cfg.hash_hex() + ".ckpt";
  if (fs::exists(path)) return io::load_checkpoint(path);
  if (vanilla) {
    auto bundle =
        pipeline::finetune_base(parent, target, cfg, cfg.training.finetune_steps, "", log);
    io::save_checkpoint(bundle, path);
    return bundle;
  }
  auto res = pipeline::finetune(parent, target, cfg, cfg.training.finetune_steps, "", log);
  io::save_checkpoint(res.bundle, path);
  return std::move(res.bundle);
}

}  // namespace acceptance
