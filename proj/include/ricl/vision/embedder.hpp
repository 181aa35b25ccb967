#pragma once

#include "ricl/common.hpp"

#include <cstdint>
#include <istream>
#include <ostream>

namespace ricl::vision {

struct RetrievalEmbedding {
  VecF vector;          // unit l2 norm
  uint64_t source_hash;  // hash of the producing config + seed
};

struct EmbedConfig {
  int image_size = 64;
  int patches = 16;    // perfect square
  int embed_dim = 64;  // E, retrieval embedding
  int token_dim = 128; // F, model width for image tokens
  uint64_t seed = 7777;
};

// Frozen visual features: a retrieval embedder (patchify -> fixed seeded
// linear projection per patch -> mean-pool -> unit-normalize) and an image
// token featurizer (one projected vector per patch). Both are fixed at
// construction and never trained; instances are immutable and safe to share
// across threads.
class FrozenEmbedder {
 public:
  explicit FrozenEmbedder(const EmbedConfig& cfg);

  RetrievalEmbedding embed_top_image(const Image& image) const;
  MatF image_to_tokens(const Image& image) const;  // P x F

  static float distance(const RetrievalEmbedding& a, const RetrievalEmbedding& b);
  static float distance(const VecF& a, const VecF& b);

  const EmbedConfig& config() const { return cfg_; }
  uint64_t source_hash() const { return source_hash_; }
  int patch_dim() const { return patch_dim_; }
  const MatF& retrieval_projection() const { return retrieval_proj_; }
  const MatF& token_projection() const { return token_proj_; }
  const MatF& color_projection() const { return color_proj_; }
  const MatF& moment_projection() const { return moment_proj_; }
  const MatF& center_projection() const { return center_proj_; }

  // Byte-stable state dump (the frozen-ness check compares these).
  void serialize(std::ostream& out) const;
  static FrozenEmbedder deserialize(std::istream& in);

 private:
  FrozenEmbedder() = default;
  void check_shape(const Image& image) const;
  // centered = per-patch per-channel mean subtraction; flat regions cancel so
  // the retrieval embedding responds to layout changes, not the shared
  // background. Image tokens keep raw intensities (the policy needs color).
  MatF patch_matrix(const Image& image, bool centered) const;  // P x patch_dim

  EmbedConfig cfg_;
  int grid_ = 0;       // patches per side
  int patch_px_ = 0;   // pixels per patch side
  int patch_dim_ = 0;  // patch_px^2 * 3
  uint64_t source_hash_ = 0;
  MatF retrieval_proj_;  // E x patch_dim
  MatF token_proj_;      // F x patch_dim, applied to centered patches
  MatF color_proj_;      // F x 3, applied to the patch mean color
  MatF moment_proj_;     // F x 6, applied to per-channel first moments
  MatF center_proj_;     // F x 2, applied to the patch center (fixed bias per patch)
};

}  // namespace ricl::vision
