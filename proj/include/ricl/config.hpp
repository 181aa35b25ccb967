#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ricl {

// Full run configuration, loaded from a sectioned key=value file.
// Unknown sections or keys are rejected; every artifact is stamped with hash().
struct RunConfig {
  struct Env {
    int image_size = 64;
    int horizon = 15;      // H, chunk length
    int action_dim = 4;    // D: dx, dy, dz, gripper target
    int state_dim = 4;     // S: x, y, z, aperture
    int max_steps = 110;
    double v_max = 0.05;
    double grasp_radius = 0.035;
    double close_threshold = 0.5;
    bool wrist_view = false;
  } env;

  struct Codec {
    int bins_per_dim = 128;
    bool dct_transform = false;
  } codec;

  struct Model {
    int layers = 4;
    int heads = 4;
    int width = 128;
    int context_length = 512;
    double dropout = 0.0;
    bool causal = true;
  } model;

  struct Retrieval {
    int k = 4;
    int embed_dim = 64;  // E
    int patches = 16;    // P, must be a perfect square
    double lambda = 10.0;
    uint64_t embed_seed = 7777;
  } retrieval;

  struct Training {
    uint64_t seed = 1;
    int batch_size = 16;
    int pretrain_epochs = 4;
    int pretrain_warmup = 100;
    double pretrain_peak_lr = 3e-4;
    int pretrain_decay_steps = 0;  // 0 = derive from epoch count
    int prime_epochs = 3;
    int prime_warmup = 300;
    double prime_peak_lr = 1e-4;
    int prime_decay_steps = 0;  // 0 = derive from epoch count
    int finetune_steps = 1000;
    int finetune_warmup = 50;
    int finetune_decay_steps = 1000;
    double finetune_peak_lr = 5e-5;
    double floor_lr_ratio = 0.1;  // floor_lr = peak_lr * ratio
    double grad_clip = 1.0;
    std::string loss_mode = "post-interp";  // or "pre-interp" (ablation)
  } training;

  struct Eval {
    int n_rollouts = 20;
    std::vector<uint64_t> seeds = {101, 102, 103};
    int pre_grip_actions = 3;
    int post_grip_actions = 8;
    int post_grip_actions_finetuned = 5;
    int workers = 1;
  } eval;

  struct Paths {
    std::string data_dir;  // empty = $RICL_DATA_DIR or ./data
  } paths;

  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& text);

  // Canonical serialization; hash() is fnv1a64 over it.
  std::string canonical() const;
  uint64_t hash() const;
  std::string hash_hex() const;

  std::string resolved_data_dir() const;
  void validate() const;
};

}  // namespace ricl
