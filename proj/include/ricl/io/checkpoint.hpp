#pragma once

#include "ricl/codec/codec.hpp"
#include "ricl/config.hpp"
#include "ricl/nn/transformer.hpp"
#include "ricl/vision/embedder.hpp"

#include <memory>
#include <string>

namespace ricl::io {

struct CheckpointMeta {
  std::string phase;        // base | ricl | ricl-ft | base-ft
  std::string parent_hash;  // file hash of the parent checkpoint, hex ("" for roots)
  std::string buffer_hash;  // finetune retrieval-buffer content hash, hex
  uint64_t seed = 0;
};

// Everything needed to run a policy: transformer weights, the frozen
// embedder, the codec, and provenance. The checkpoint file serializes all of
// it so retrieval and decoding are reproducible from the file alone.
struct PolicyBundle {
  RunConfig cfg;
  nn::ModelConfig mcfg;
  std::unique_ptr<nn::TransformerModel<float>> model;
  std::unique_ptr<vision::FrozenEmbedder> embedder;
  std::unique_ptr<codec::Codec> codec;
  CheckpointMeta meta;
};

codec::CodecConfig make_codec_config(const RunConfig& cfg);
vision::EmbedConfig make_embed_config(const RunConfig& cfg);
nn::ModelConfig make_model_config(const RunConfig& cfg, const codec::CodecConfig& ccfg);

// Fresh bundle with seeded parameter init.
PolicyBundle new_bundle(const RunConfig& cfg, uint64_t model_seed, const std::string& phase);

// Deep copy (parameters included); meta is copied too.
PolicyBundle clone_bundle(const PolicyBundle& src);

// Returns the file hash (fnv1a64 over the written bytes).
uint64_t save_checkpoint(const PolicyBundle& bundle, const std::string& path);
PolicyBundle load_checkpoint(const std::string& path);

uint64_t file_hash(const std::string& path);

}  // namespace ricl::io
