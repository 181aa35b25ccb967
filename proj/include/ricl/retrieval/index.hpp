#pragma once

#include "ricl/codec/codec.hpp"
#include "ricl/common.hpp"
#include "ricl/sim/types.hpp"
#include "ricl/vision/embedder.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ricl::retrieval {

struct BufferEntry {
  int task_idx = 0;   // into the index's task table
  int demo_id = 0;    // globally unique across tasks
  int step_index = 0;
  VecD proprio;
  std::vector<int> action_ids;  // encoded chunk, N_act
};

struct TaskInfo {
  std::string task_id;
  std::string prompt;
  std::vector<int> prompt_ids;
};

struct Neighbor {
  int entry = -1;
  float distance = 0.f;
};

struct QueryResult {
  std::vector<Neighbor> neighbors;  // ascending distance, ties by (demo_id, step)
  bool padded = false;              // fewer candidates than k: farthest repeated
};

// Exact-kNN retrieval buffer over demonstration steps. Immutable after
// build(); concurrent queries are safe. Embeddings are unit-norm vectors from
// the frozen embedder, distances are plain l2.
class Index {
 public:
  static Index build(const std::vector<const sim::Demonstration*>& demos,
                     const std::vector<sim::TaskSpec>& tasks, const vision::FrozenEmbedder& embedder,
                     const codec::Codec& codec);

  QueryResult query(const VecF& q, int k, std::optional<int> exclude_demo = std::nullopt,
                    std::optional<int> restrict_task = std::nullopt) const;
  float nearest_distance(const VecF& q) const;

  int size() const { return int(entries_.size()); }
  int task_count() const { return int(tasks_.size()); }
  int task_entry_count(int task_idx) const;
  const BufferEntry& entry(int i) const { return entries_[size_t(i)]; }
  const TaskInfo& task(int i) const { return tasks_[size_t(i)]; }
  VecF embedding(int i) const { return embeddings_.col(i); }
  const MatF& image_tokens(int i) const { return image_tokens_[size_t(i)]; }
  uint64_t config_hash() const { return config_hash_; }
  uint64_t content_hash() const;

  // Single-entry distance; the exactness oracle calls this same function so
  // index and brute-force scan agree bitwise.
  float distance_sq_to(int i, const VecF& q) const {
    return (embeddings_.col(i) - q).squaredNorm();
  }

  void save(const std::string& path) const;
  // Payload images live in the demo store; the loader recomputes image tokens
  // from the referenced demonstrations.
  static Index load(const std::string& path,
                    const std::vector<const sim::Demonstration*>& demos,
                    const vision::FrozenEmbedder& embedder);

 private:
  Index() = default;

  MatF embeddings_;                  // E x N, column i = entry i
  std::vector<MatF> image_tokens_;   // per entry, P x F
  std::vector<BufferEntry> entries_;
  std::vector<TaskInfo> tasks_;
  uint64_t config_hash_ = 0;
};

}  // namespace ricl::retrieval
