#include "ricl/pipeline/train.hpp"

#include "ricl/policy/policy.hpp"

#include <algorithm>
#include <functional>

namespace ricl::pipeline {
namespace {

policy::LossMode loss_mode_of(const RunConfig& cfg) {
  return cfg.training.loss_mode == "pre-interp" ? policy::LossMode::PreInterp
                                                : policy::LossMode::PostInterp;
}

// Shared seeded training loop: shuffled passes over item contexts, batched
// optimizer steps, cosine schedule.
void run_training(io::PolicyBundle& bundle, size_t n_items,
                  const std::function<policy::ContextSequence(size_t)>& context_of, long total_steps,
                  const nn::CosineSchedule& schedule, uint64_t shuffle_seed, policy::LossMode mode,
                  std::ostream* log, TrainStats* stats) {
  const int B = bundle.cfg.training.batch_size;
  nn::AdamOptimizer<float> opt(bundle.model->params(), schedule,
                               float(bundle.cfg.training.grad_clip));
  std::vector<size_t> order(n_items);
  for (size_t i = 0; i < n_items; ++i) order[i] = i;

  long step = 0;
  int epoch = 0;
  while (step < total_steps) {
    Rng rng(Rng::substream(shuffle_seed, uint64_t(epoch)));
    for (size_t i = n_items; i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.uniform_int(int(i)))]);
    bool first_in_epoch = true;
    for (size_t at = 0; at < n_items && step < total_steps; at += size_t(B)) {
      std::vector<policy::ContextSequence> contexts;
      std::vector<const policy::ContextSequence*> batch;
      size_t end = std::min(at + size_t(B), n_items);
      contexts.reserve(end - at);
      for (size_t i = at; i < end; ++i) contexts.push_back(context_of(order[i]));
      for (const auto& c : contexts) batch.push_back(&c);
      float loss = policy::train_step(*bundle.model, batch, opt, bundle.cfg.retrieval.lambda, mode);
      if (stats) {
        if (step == 0) stats->first_loss = loss;
        if (first_in_epoch) stats->epoch_first_losses.push_back(loss);
        stats->last_loss = loss;
        stats->steps = step + 1;
      }
      first_in_epoch = false;
      if (log && (step % 50 == 0 || step + 1 == total_steps))
        (*log) << "step " << step << "/" << total_steps << " loss " << loss << " lr "
               << schedule.lr_at(step) << "\n";
      ++step;
    }
    ++epoch;
  }
}

nn::CosineSchedule make_schedule(int warmup, double peak, int decay, long total,
                                 double floor_ratio) {
  nn::CosineSchedule s;
  s.warmup_steps = warmup;
  s.peak_lr = peak;
  s.decay_steps = decay > 0 ? decay : int(std::max(1L, total - warmup));
  s.floor_lr = peak * floor_ratio;
  return s;
}

std::unique_ptr<retrieval::Index> build_task_index(const TaskDemos& td,
                                                   const io::PolicyBundle& bundle) {
  std::vector<const sim::Demonstration*> ptrs;
  for (const auto& d : td.demos) ptrs.push_back(&d);
  return std::make_unique<retrieval::Index>(
      retrieval::Index::build(ptrs, {td.spec}, *bundle.embedder, *bundle.codec));
}

}  // namespace

io::PolicyBundle pretrain_base(const DemoSet& priming_demos, const RunConfig& cfg,
                               std::ostream* log, TrainStats* stats) {
  io::PolicyBundle bundle =
      io::new_bundle(cfg, Rng::substream(cfg.training.seed, 0xBA5E), "base");

  // per-task indices give us cached image tokens and encoded targets
  std::vector<std::unique_ptr<retrieval::Index>> indices;
  std::vector<std::pair<int, int>> items;  // (task, entry)
  for (size_t t = 0; t < priming_demos.size(); ++t) {
    indices.push_back(build_task_index(priming_demos[t], bundle));
    for (int e = 0; e < indices.back()->size(); ++e) items.push_back({int(t), e});
  }

  const long total =
      long(cfg.training.pretrain_epochs) * long((items.size() + size_t(cfg.training.batch_size) - 1) /
                                                size_t(cfg.training.batch_size));
  auto schedule = make_schedule(cfg.training.pretrain_warmup, cfg.training.pretrain_peak_lr,
                                cfg.training.pretrain_decay_steps, total,
                                cfg.training.floor_lr_ratio);
  run_training(
      bundle, items.size(),
      [&](size_t i) {
        return make_query_context(*indices[size_t(items[i].first)], items[i].second, bundle);
      },
      total, schedule, Rng::substream(cfg.training.seed, 0x5B0F), policy::LossMode::PreInterp, log,
      stats);
  return bundle;
}

io::PolicyBundle prime(const io::PolicyBundle& base, const PrimingDataset& dataset,
                       const RunConfig& cfg, const std::string& parent_hash, std::ostream* log,
                       TrainStats* stats) {
  io::PolicyBundle bundle = io::clone_bundle(base);
  bundle.cfg = cfg;
  bundle.meta.phase = "ricl";
  bundle.meta.parent_hash = parent_hash;

  const long total =
      long(cfg.training.prime_epochs) * long((dataset.size() + size_t(cfg.training.batch_size) - 1) /
                                             size_t(cfg.training.batch_size));
  auto schedule = make_schedule(cfg.training.prime_warmup, cfg.training.prime_peak_lr,
                                cfg.training.prime_decay_steps, total, cfg.training.floor_lr_ratio);
  run_training(
      bundle, dataset.size(),
      [&](size_t i) { return make_priming_context(dataset, dataset.items[i], bundle); }, total,
      schedule, Rng::substream(cfg.training.seed, 0x9817), loss_mode_of(cfg), log, stats);
  return bundle;
}

FinetuneResult finetune(const io::PolicyBundle& ricl, const TaskDemos& target, const RunConfig& cfg,
                        int steps, const std::string& parent_hash, std::ostream* log,
                        TrainStats* stats) {
  FinetuneResult out;
  out.buffer = build_task_index(target, ricl);
  if (steps == 0) {
    out.bundle = io::clone_bundle(ricl);
    return out;
  }

  DemoSet single{target};
  PrimingDataset dataset = build_priming_dataset(single, ricl, cfg.retrieval.k);

  out.bundle = io::clone_bundle(ricl);
  out.bundle.meta.phase = "ricl-ft";
  out.bundle.meta.parent_hash = parent_hash;
  out.bundle.meta.buffer_hash = hex64(out.buffer->content_hash());

  auto schedule = make_schedule(cfg.training.finetune_warmup, cfg.training.finetune_peak_lr,
                                cfg.training.finetune_decay_steps, steps,
                                cfg.training.floor_lr_ratio);
  run_training(
      out.bundle, dataset.size(),
      [&](size_t i) { return make_priming_context(dataset, dataset.items[i], out.bundle); },
      steps, schedule, Rng::substream(cfg.training.seed, 0xF17), loss_mode_of(cfg), log, stats);
  return out;
}

io::PolicyBundle finetune_base(const io::PolicyBundle& base, const TaskDemos& target,
                               const RunConfig& cfg, int steps, const std::string& parent_hash,
                               std::ostream* log, TrainStats* stats) {
  io::PolicyBundle bundle = io::clone_bundle(base);
  if (steps == 0) return bundle;
  bundle.meta.phase = "base-ft";
  bundle.meta.parent_hash = parent_hash;

  auto index = build_task_index(target, bundle);
  auto schedule = make_schedule(cfg.training.finetune_warmup, cfg.training.finetune_peak_lr,
                                cfg.training.finetune_decay_steps, steps,
                                cfg.training.floor_lr_ratio);
  run_training(
      bundle, size_t(index->size()),
      [&](size_t i) { return make_query_context(*index, int(i), bundle); }, steps, schedule,
      Rng::substream(cfg.training.seed, 0xBF17), policy::LossMode::PreInterp, log, stats);
  return bundle;
}

}  // namespace ricl::pipeline
