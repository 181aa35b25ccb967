#pragma once

#include "ricl/config.hpp"
#include "ricl/sim/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace ricl::io {

// On-disk demonstration store: one JSON-lines file per task (one record per
// step, image payload base64 with declared shape/dtype) plus a manifest
// listing tasks, prompts, seeds and the config hash. Readers validate the
// declared shape before decoding any payload.
struct DemoStoreManifest {
  struct TaskEntry {
    std::string task_id;
    std::string prompt;
    std::string file;
    std::vector<int> demo_ids;
    std::vector<uint64_t> seeds;
  };
  std::vector<TaskEntry> tasks;
  std::string config_hash;
  int image_size = 0;
  int horizon = 0;
  int action_dim = 0;
  int state_dim = 0;

  int total_demos() const {
    int n = 0;
    for (const auto& t : tasks) n += int(t.demo_ids.size());
    return n;
  }
};

std::string base64_encode(const unsigned char* data, size_t n);
std::vector<unsigned char> base64_decode(const std::string& text);

void write_demo_store(const std::string& dir,
                      const std::map<std::string, std::vector<sim::Demonstration>>& demos_by_task,
                      const RunConfig& cfg, bool force);

DemoStoreManifest read_manifest(const std::string& dir);

// Loads one task's demonstrations. Images are stored as u8 and rescaled to
// [0,1]; labels and proprio round-trip exactly.
std::vector<sim::Demonstration> read_task_demos(const std::string& dir,
                                                const DemoStoreManifest& manifest,
                                                const std::string& task_id);

}  // namespace ricl::io
