#pragma once

#include "ricl/pipeline/dataset.hpp"

#include <ostream>

namespace ricl::pipeline {

struct TrainStats {
  long steps = 0;
  float first_loss = 0.f;
  float last_loss = 0.f;
  std::vector<float> epoch_first_losses;
};

// Base VLA stand-in: the same transformer trained on query-only sequences
// with plain next-action-token cross-entropy.
io::PolicyBundle pretrain_base(const DemoSet& priming_demos, const RunConfig& cfg,
                               std::ostream* log = nullptr, TrainStats* stats = nullptr);

// Retrieval-augmented post-training of the base on leave-one-demo-out
// contexts with the query-masked interpolated loss.
io::PolicyBundle prime(const io::PolicyBundle& base, const PrimingDataset& dataset,
                       const RunConfig& cfg, const std::string& parent_hash,
                       std::ostream* log = nullptr, TrainStats* stats = nullptr);

struct FinetuneResult {
  io::PolicyBundle bundle;
  std::unique_ptr<retrieval::Index> buffer;  // the same demos it finetuned on
};

// Retrieval-augmented finetune on the target task's demos only; at deployment
// the rollout buffer is exactly these demos (buffer hash stamped in meta).
// steps == 0 returns the parent unchanged.
FinetuneResult finetune(const io::PolicyBundle& ricl, const TaskDemos& target, const RunConfig& cfg,
                        int steps, const std::string& parent_hash, std::ostream* log = nullptr,
                        TrainStats* stats = nullptr);

// Vanilla (query-only) finetune of the base policy on the target demos.
io::PolicyBundle finetune_base(const io::PolicyBundle& base, const TaskDemos& target,
                               const RunConfig& cfg, int steps, const std::string& parent_hash,
                               std::ostream* log = nullptr, TrainStats* stats = nullptr);

}  // namespace ricl::pipeline
