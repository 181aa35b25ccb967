#pragma once

#include "ricl/codec/codec.hpp"
#include "ricl/nn/transformer.hpp"

#include <optional>
#include <ostream>

namespace ricl::policy {

using codec::Segment;

// One retrieved unit, viewing storage owned by a retrieval index.
struct NeighborGroup {
  const MatF* image_tokens = nullptr;        // P x F
  const std::vector<int>* prompt_ids = nullptr;
  VecD proprio;
  const std::vector<int>* action_ids = nullptr;  // N_act
  float distance_to_query = 0.f;
  int demo_id = -1;
  int step_index = -1;
};

struct QueryGroup {
  MatF image_tokens;  // P x F
  std::optional<MatF> wrist_tokens;
  std::vector<int> prompt_ids;
  VecD proprio;
  std::optional<std::vector<int>> target_action_ids;  // present iff training
};

// Flattened Fig-2-style context: k neighbor groups ordered closest-first,
// then the query group. Every position carries a segment tag and group index.
struct ContextSequence {
  nn::TokenizedInput<float> input;
  std::vector<float> distances;     // ascending, one per neighbor group
  std::vector<int> aprime_ids;      // closest neighbor's action ids (empty if k = 0)
  std::vector<int> target_ids;      // training only, N_act
  std::vector<int> loss_positions;  // training only: positions whose logits predict target_ids
  int k = 0;
  bool training = false;
  int query_group = 0;        // group index of the query
  int decode_start = 0;       // position of the first query action input token

  int length() const { return input.length(); }

  // Line-delimited per-position table: position, segment, group, id or vector hash.
  void debug_dump(std::ostream& out) const;
};

struct AssembleConfig {
  int k = 4;              // required neighbor count
  int width = 128;        // model width (image token dim)
  int context_length = 512;
  int query_group = -1;   // group index of the query; -1 = k (query-only
                          // contexts pass the deployment k here so the query
                          // keeps a stable group embedding across phases)
};

// Concatenates [image, prompt, state, actions] per group, closest neighbor
// leftmost, query last. Neighbors must arrive sorted ascending by distance.
ContextSequence assemble_context(const std::vector<NeighborGroup>& neighbors,
                                 const QueryGroup& query, const codec::Codec& codec,
                                 const AssembleConfig& cfg);

}  // namespace ricl::policy
